#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fast {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over the target, so readers
// never observe a truncated file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

// Splits on ',' with surrounding whitespace trimmed. No quoting support.
std::vector<std::string> split_csv_line(const std::string& line);

// 17 significant digits, enough to round-trip any double.
std::string format_double(double value);

// Accumulates a CSV document with a fixed header.
class CsvTable {
   public:
    explicit CsvTable(std::vector<std::string> header);

    void add_row(const std::vector<std::string>& cells);
    std::string str() const;
    void save(const std::filesystem::path& path) const { write_file_atomic(path, str()); }
    std::size_t rows() const { return rows_.size(); }

   private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// Level from FAST_STG_LOG (error|info|debug); info when unset.
LogLevel log_level();
void log(LogLevel level, const std::string& message);

}  // namespace fast
