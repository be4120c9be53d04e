#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "coco/matrix.hpp"

namespace coco {

// Ordered key/value metadata echoed into output files.
using MetaLines = std::vector<std::pair<std::string, std::string>>;

// Shortest text that round-trips a double: %.17g.
std::string format17(double value);

// Little-endian scalar I/O for the checkpoint format.
void write_le_u32(std::ostream& out, std::uint32_t v);
void write_le_f64(std::ostream& out, double v);
std::uint32_t read_le_u32(std::istream& in, const char* what);
double read_le_f64(std::istream& in, const char* what);

struct FeatureDump {
    Matrix features;
    std::vector<int> labels;
};

// CSV with '#'-prefixed metadata lines, then header label,f0,...,f{D-1}.
void write_features_csv(const std::string& path, const Matrix& features,
                        const std::vector<int>& labels, const MetaLines& meta);
FeatureDump load_features_csv(const std::string& path);

struct Keypoint {
    int id = 0;
    double x = 0.0, y = 0.0;
};

// CSV with header point_id,x,y ('#' metadata lines allowed).
void write_keypoints_csv(const std::string& path,
                         const std::vector<Keypoint>& points,
                         const MetaLines& meta);
std::vector<Keypoint> load_keypoints_csv(const std::string& path);

// Minimal JSON emitter with insertion-ordered keys and doubles rendered by
// format17, so identical runs serialize byte-identically.
class JsonWriter {
public:
    JsonWriter& begin_object();
    JsonWriter& end_object();
    JsonWriter& begin_array();
    JsonWriter& end_array();
    JsonWriter& key(const std::string& name);
    JsonWriter& value(const std::string& v);
    JsonWriter& value(const char* v);
    JsonWriter& value(double v);
    JsonWriter& value(int v);
    JsonWriter& value(long long v);
    JsonWriter& value(std::uint64_t v);
    JsonWriter& value(bool v);
    std::string str() const { return out_; }

private:
    void comma();
    void append_escaped(const std::string& s);
    std::string out_;
    std::vector<bool> first_stack_{};
    bool pending_key_ = false;
};

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace coco
