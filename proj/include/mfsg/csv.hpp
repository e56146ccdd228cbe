#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mfsg/errors.hpp"

namespace mfsg {

// CSV writing with 17-significant-digit floats (value-preserving for double).
class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
        : out_(path) {
        if (!out_) throw ConfigError(ConfigError::Kind::io, path.string(),
                                     "cannot open for writing: " + path.string());
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out_ << ',';
            out_ << header[i];
        }
        out_ << '\n';
    }

    void row(const std::vector<double>& values) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) out_ << ',';
            out_ << num(values[i]);
        }
        out_ << '\n';
    }

    void raw_row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    static std::string num(double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return buf;
    }

  private:
    std::ofstream out_;
};

}  // namespace mfsg
