#include "coco/io.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "coco/errors.hpp"

namespace coco {

std::string format17(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

namespace {

template <typename T>
void write_le(std::ostream& out, T v) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
            std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const char* what) {
    std::array<unsigned char, sizeof(T)> bytes;
    if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T)))
        throw TruncatedFileError(std::string("truncated reading ") + what);
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
            std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
    return std::bit_cast<T>(bytes);
}

} // namespace

void write_le_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_le_f64(std::ostream& out, double v) { write_le(out, v); }
std::uint32_t read_le_u32(std::istream& in, const char* what) {
    return read_le<std::uint32_t>(in, what);
}
double read_le_f64(std::istream& in, const char* what) {
    return read_le<double>(in, what);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_features_csv(const std::string& path, const Matrix& features,
                        const std::vector<int>& labels, const MetaLines& meta) {
    if (labels.size() != features.rows)
        throw DimMismatchError("features csv: label count mismatch");
    std::ostringstream out;
    for (const auto& [k, v] : meta) out << "# " << k << " = " << v << "\n";
    out << "label";
    for (std::size_t d = 0; d < features.cols; ++d) out << ",f" << d;
    out << "\n";
    for (std::size_t i = 0; i < features.rows; ++i) {
        out << labels[i];
        const double* row = features.row(i);
        for (std::size_t d = 0; d < features.cols; ++d)
            out << ',' << format17(row[d]);
        out << "\n";
    }
    write_text_file(path, out.str());
}

namespace {

// Splits a CSV line; no quoting, none of our formats needs it.
std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

bool next_data_line(std::istream& in, std::string& line) {
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        return true;
    }
    return false;
}

} // namespace

FeatureDump load_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open: " + path);
    std::string line;
    if (!next_data_line(in, line))
        throw Error("features csv: no header in " + path);
    const auto header = split_csv(line);
    if (header.empty() || header[0] != "label")
        throw Error("features csv: header must start with 'label'");
    const std::size_t dim = header.size() - 1;

    FeatureDump dump;
    std::vector<double> values;
    while (next_data_line(in, line)) {
        const auto fields = split_csv(line);
        if (fields.size() != dim + 1)
            throw Error("features csv: row width mismatch in " + path);
        dump.labels.push_back(std::stoi(fields[0]));
        for (std::size_t d = 0; d < dim; ++d)
            values.push_back(std::stod(fields[d + 1]));
    }
    dump.features = Matrix(dump.labels.size(), dim);
    dump.features.data = std::move(values);
    return dump;
}

void write_keypoints_csv(const std::string& path,
                         const std::vector<Keypoint>& points,
                         const MetaLines& meta) {
    std::ostringstream out;
    for (const auto& [k, v] : meta) out << "# " << k << " = " << v << "\n";
    out << "point_id,x,y\n";
    for (const auto& p : points)
        out << p.id << ',' << format17(p.x) << ',' << format17(p.y) << "\n";
    write_text_file(path, out.str());
}

std::vector<Keypoint> load_keypoints_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open: " + path);
    std::string line;
    if (!next_data_line(in, line))
        throw Error("keypoints csv: no header in " + path);
    if (split_csv(line) != std::vector<std::string>{"point_id", "x", "y"})
        throw Error("keypoints csv: expected header point_id,x,y");
    std::vector<Keypoint> points;
    while (next_data_line(in, line)) {
        const auto fields = split_csv(line);
        if (fields.size() != 3)
            throw Error("keypoints csv: row width mismatch in " + path);
        points.push_back({std::stoi(fields[0]), std::stod(fields[1]),
                          std::stod(fields[2])});
    }
    return points;
}

JsonWriter& JsonWriter::begin_object() {
    comma();
    out_ += '{';
    first_stack_.push_back(true);
    pending_key_ = false;
    return *this;
}

JsonWriter& JsonWriter::end_object() {
    out_ += '}';
    first_stack_.pop_back();
    return *this;
}

JsonWriter& JsonWriter::begin_array() {
    comma();
    out_ += '[';
    first_stack_.push_back(true);
    pending_key_ = false;
    return *this;
}

JsonWriter& JsonWriter::end_array() {
    out_ += ']';
    first_stack_.pop_back();
    return *this;
}

JsonWriter& JsonWriter::key(const std::string& name) {
    comma();
    append_escaped(name);
    out_ += ':';
    pending_key_ = true;
    return *this;
}

JsonWriter& JsonWriter::value(const std::string& v) {
    comma();
    append_escaped(v);
    pending_key_ = false;
    return *this;
}

JsonWriter& JsonWriter::value(const char* v) { return value(std::string(v)); }

JsonWriter& JsonWriter::value(double v) {
    comma();
    out_ += format17(v);
    pending_key_ = false;
    return *this;
}

JsonWriter& JsonWriter::value(int v) {
    comma();
    out_ += std::to_string(v);
    pending_key_ = false;
    return *this;
}

JsonWriter& JsonWriter::value(long long v) {
    comma();
    out_ += std::to_string(v);
    pending_key_ = false;
    return *this;
}

JsonWriter& JsonWriter::value(std::uint64_t v) {
    comma();
    out_ += std::to_string(v);
    pending_key_ = false;
    return *this;
}

JsonWriter& JsonWriter::value(bool v) {
    comma();
    out_ += v ? "true" : "false";
    pending_key_ = false;
    return *this;
}

void JsonWriter::comma() {
    if (pending_key_) return;  // value directly follows its key
    if (!first_stack_.empty()) {
        if (!first_stack_.back()) out_ += ',';
        first_stack_.back() = false;
    }
}

void JsonWriter::append_escaped(const std::string& s) {
    out_ += '"';
    for (char c : s) {
        switch (c) {
            case '"': out_ += "\\\""; break;
            case '\\': out_ += "\\\\"; break;
            case '\n': out_ += "\\n"; break;
            case '\t': out_ += "\\t"; break;
            case '\r': out_ += "\\r"; break;
            default: out_ += c;
        }
    }
    out_ += '"';
}

} // namespace coco
