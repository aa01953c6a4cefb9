#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace itrack {

// Minimal comma-separated reader: no quoting, trailing '\r' stripped, blank
// lines skipped. Enough for the panel and prediction files this project reads.
class CsvReader {
 public:
  explicit CsvReader(const std::filesystem::path& path);

  std::optional<std::vector<std::string>> next();
  // 1-based line number of the row last returned by next().
  std::size_t line() const noexcept { return line_; }

 private:
  std::ifstream in_;
  std::string buf_;
  std::size_t line_ = 0;
};

}  // namespace itrack
