#pragma once

#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace metabit::testing {

inline std::string data_path(const std::string& name) { return std::string(METABIT_TEST_DATA) + "/" + name; }

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_types(const std::string& path) {
  std::ifstream in(path);
  std::string line, out;
  while (std::getline(in, line)) {
    if (!line.empty()) out += line[0];
  }
  return out;
}

}  // namespace metabit::testing
