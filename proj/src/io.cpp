#include "fast/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace fast {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write '" + tmp.string() + "'");
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            throw std::runtime_error("write failed for '" + tmp.string() + "'");
        }
    }
    std::filesystem::rename(tmp, path);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        const auto first = cell.find_first_not_of(" \t");
        const auto last = cell.find_last_not_of(" \t");
        cells.push_back(first == std::string::npos ? "" : cell.substr(first, last - first + 1));
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return cells;
}

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvTable::add_row(const std::vector<std::string>& cells) {
    if (cells.size() != header_.size()) {
        throw std::logic_error("csv row has " + std::to_string(cells.size()) + " cells, header has " +
                               std::to_string(header_.size()));
    }
    rows_.push_back(cells);
}

std::string CsvTable::str() const {
    std::ostringstream os;
    auto emit = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            os << (i ? "," : "") << cells[i];
        }
        os << '\n';
    };
    emit(header_);
    for (const auto& r : rows_) {
        emit(r);
    }
    return os.str();
}

LogLevel log_level() {
    const char* env = std::getenv("FAST_STG_LOG");
    if (env == nullptr) {
        return LogLevel::kInfo;
    }
    const std::string v = env;
    if (v == "error") {
        return LogLevel::kError;
    }
    if (v == "debug") {
        return LogLevel::kDebug;
    }
    return LogLevel::kInfo;
}

void log(LogLevel level, const std::string& message) {
    if (static_cast<int>(level) > static_cast<int>(log_level())) {
        return;
    }
    static const char* tags[] = {"error", "info", "debug"};
    std::cerr << "[" << tags[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace fast
