// SPDX-License-Identifier: Apache-2.0

#include "ref_splat_reader.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ggrow::refply {

SplatFile read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw std::runtime_error("missing magic");
  SplatFile f;
  bool format_ok = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      format_ok = fmt == "binary_little_endian" && ver == "1.0";
    } else if (kw == "element") {
      std::string name;
      ls >> name >> f.count;
      if (name != "vertex") throw std::runtime_error("unexpected element " + name);
    } else if (kw == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "float") throw std::runtime_error("non-float property " + name);
      f.order.push_back(name);
    } else if (kw == "end_header") {
      break;
    } else if (kw != "comment" && kw != "obj_info") {
      throw std::runtime_error("unexpected header line: " + line);
    }
  }
  if (!format_ok) throw std::runtime_error("not binary_little_endian 1.0");
  std::vector<char> row(f.order.size() * 4);
  for (const auto& n : f.order) f.fields[n].reserve(f.count);
  for (std::size_t r = 0; r < f.count; ++r) {
    if (!in.read(row.data(), static_cast<std::streamsize>(row.size()))) {
      throw std::runtime_error("truncated body");
    }
    for (std::size_t c = 0; c < f.order.size(); ++c) {
      float v;
      std::memcpy(&v, row.data() + 4 * c, 4);
      f.fields[f.order[c]].push_back(v);
    }
  }
  return f;
}

}  // namespace ggrow::refply
