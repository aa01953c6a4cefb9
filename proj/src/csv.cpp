#include "itrack/csv.hpp"

#include "itrack/errors.hpp"

namespace itrack {

CsvReader::CsvReader(const std::filesystem::path& path) : in_(path) {
  if (!in_) throw Error("cannot open " + path.string());
}

std::optional<std::vector<std::string>> CsvReader::next() {
  while (std::getline(in_, buf_)) {
    ++line_;
    if (!buf_.empty() && buf_.back() == '\r') buf_.pop_back();
    if (buf_.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = buf_.find(',', start);
      fields.emplace_back(buf_.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return fields;
  }
  return std::nullopt;
}

}  // namespace itrack
