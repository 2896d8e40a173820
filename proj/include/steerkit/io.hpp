#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "steerkit/common.hpp"

namespace steerkit {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Flat float32 weight blobs. Tensors are written in a fixed order as
// little-endian 32-bit floats, column-major; the JSON header alongside the
// blob records names and shapes.
// ---------------------------------------------------------------------------

class BlobWriter {
  public:
    explicit BlobWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open for write: " + path);
    }
    void write(const Eigen::MatrixXd& m) {
        buf_.resize(static_cast<size_t>(m.size()));
        const double* src = m.data();
        for (size_t i = 0; i < buf_.size(); ++i) buf_[i] = static_cast<float>(src[i]);
        out_.write(reinterpret_cast<const char*>(buf_.data()),
                   static_cast<std::streamsize>(buf_.size() * sizeof(float)));
    }
    void write(const Eigen::VectorXd& v) {
        write(Eigen::MatrixXd(v));
    }

  private:
    std::ofstream out_;
    std::vector<float> buf_;
};

class BlobReader {
  public:
    explicit BlobReader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open for read: " + path);
    }
    Eigen::MatrixXd read_matrix(Eigen::Index rows, Eigen::Index cols) {
        buf_.resize(static_cast<size_t>(rows * cols));
        in_.read(reinterpret_cast<char*>(buf_.data()),
                 static_cast<std::streamsize>(buf_.size() * sizeof(float)));
        if (!in_) throw IoError("weight blob truncated");
        Eigen::MatrixXd m(rows, cols);
        double* dst = m.data();
        for (size_t i = 0; i < buf_.size(); ++i) dst[i] = static_cast<double>(buf_[i]);
        return m;
    }
    Eigen::VectorXd read_vector(Eigen::Index n) {
        return Eigen::VectorXd(read_matrix(n, 1));
    }

  private:
    std::ifstream in_;
    std::vector<float> buf_;
};

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for write: " + path);
    out << j.dump(2) << "\n";
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for read: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseFailure(path + ": " + e.what());
    }
    return j;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for read: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Locale-independent numeric formatting for CSV artifacts; %.17g round-trips
// doubles exactly so reruns are byte-identical.
inline std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::string fmt_fixed(double x, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, x);
    return buf;
}

class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header)
        : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open for write: " + path);
        for (size_t i = 0; i < header.size(); ++i) {
            if (i) out_ << ',';
            out_ << header[i];
        }
        out_ << '\n';
    }
    void row(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

  private:
    std::ofstream out_;
};

} // namespace steerkit
