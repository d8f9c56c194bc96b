// SPDX-License-Identifier: Apache-2.0

#include "ggrow/ply.hpp"

#include "ggrow/common.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace ggrow::ply {

static_assert(std::endian::native == std::endian::little,
              "binary PLY I/O assumes a little-endian host");

namespace {

[[noreturn]] void header_error(const std::string& msg) {
  throw Error(ErrorCode::MalformedHeader, "PLY header: " + msg);
}

bool parse_type(const std::string& s, Type& t) {
  if (s == "char" || s == "int8") t = Type::Int8;
  else if (s == "uchar" || s == "uint8") t = Type::UInt8;
  else if (s == "short" || s == "int16") t = Type::Int16;
  else if (s == "ushort" || s == "uint16") t = Type::UInt16;
  else if (s == "int" || s == "int32") t = Type::Int32;
  else if (s == "uint" || s == "uint32") t = Type::UInt32;
  else if (s == "float" || s == "float32") t = Type::Float32;
  else if (s == "double" || s == "float64") t = Type::Float64;
  else return false;
  return true;
}

double read_binary_scalar(std::istream& in, Type t) {
  unsigned char buf[8];
  const std::size_t n = type_size(t);
  if (!in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n))) {
    throw Error(ErrorCode::TruncatedData, "PLY body ended early");
  }
  switch (t) {
    case Type::Int8: { std::int8_t v; std::memcpy(&v, buf, 1); return v; }
    case Type::UInt8: return buf[0];
    case Type::Int16: { std::int16_t v; std::memcpy(&v, buf, 2); return v; }
    case Type::UInt16: { std::uint16_t v; std::memcpy(&v, buf, 2); return v; }
    case Type::Int32: { std::int32_t v; std::memcpy(&v, buf, 4); return v; }
    case Type::UInt32: { std::uint32_t v; std::memcpy(&v, buf, 4); return v; }
    case Type::Float32: { float v; std::memcpy(&v, buf, 4); return v; }
    case Type::Float64: { double v; std::memcpy(&v, buf, 8); return v; }
  }
  return 0.0;
}

double read_ascii_scalar(std::istream& in, Type t) {
  std::string tok;
  if (!(in >> tok)) throw Error(ErrorCode::TruncatedData, "PLY body ended early");
  double v = 0.0;
  if (is_float(t)) {
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size()) {
      throw Error(ErrorCode::TruncatedData, "PLY body: bad number '" + tok + "'");
    }
    if (t == Type::Float32) v = static_cast<float>(v);
  } else {
    long long iv = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), iv);
    if (ec != std::errc() || p != tok.data() + tok.size()) {
      throw Error(ErrorCode::TruncatedData, "PLY body: bad integer '" + tok + "'");
    }
    v = static_cast<double>(iv);
  }
  return v;
}

double read_scalar(std::istream& in, Format f, Type t) {
  return f == Format::Ascii ? read_ascii_scalar(in, t) : read_binary_scalar(in, t);
}

void write_binary_scalar(std::ostream& out, Type t, double v) {
  unsigned char buf[8];
  switch (t) {
    case Type::Int8: { auto x = static_cast<std::int8_t>(v); std::memcpy(buf, &x, 1); break; }
    case Type::UInt8: { auto x = static_cast<std::uint8_t>(v); std::memcpy(buf, &x, 1); break; }
    case Type::Int16: { auto x = static_cast<std::int16_t>(v); std::memcpy(buf, &x, 2); break; }
    case Type::UInt16: { auto x = static_cast<std::uint16_t>(v); std::memcpy(buf, &x, 2); break; }
    case Type::Int32: { auto x = static_cast<std::int32_t>(v); std::memcpy(buf, &x, 4); break; }
    case Type::UInt32: { auto x = static_cast<std::uint32_t>(v); std::memcpy(buf, &x, 4); break; }
    case Type::Float32: { auto x = static_cast<float>(v); std::memcpy(buf, &x, 4); break; }
    case Type::Float64: std::memcpy(buf, &v, 8); break;
  }
  out.write(reinterpret_cast<const char*>(buf),
            static_cast<std::streamsize>(type_size(t)));
}

void write_ascii_scalar(std::ostream& out, Type t, double v) {
  char buf[64];
  std::to_chars_result r;
  if (t == Type::Float32) r = std::to_chars(buf, buf + sizeof buf, static_cast<float>(v));
  else if (t == Type::Float64) r = std::to_chars(buf, buf + sizeof buf, v);
  else r = std::to_chars(buf, buf + sizeof buf, static_cast<long long>(v));
  out.write(buf, r.ptr - buf);
}

}  // namespace

std::size_t type_size(Type t) {
  switch (t) {
    case Type::Int8: case Type::UInt8: return 1;
    case Type::Int16: case Type::UInt16: return 2;
    case Type::Int32: case Type::UInt32: case Type::Float32: return 4;
    case Type::Float64: return 8;
  }
  return 0;
}

const char* type_name(Type t) {
  switch (t) {
    case Type::Int8: return "char";
    case Type::UInt8: return "uchar";
    case Type::Int16: return "short";
    case Type::UInt16: return "ushort";
    case Type::Int32: return "int";
    case Type::UInt32: return "uint";
    case Type::Float32: return "float";
    case Type::Float64: return "double";
  }
  return "?";
}

bool is_float(Type t) { return t == Type::Float32 || t == Type::Float64; }

int Element::find(const std::string& prop) const {
  for (std::size_t i = 0; i < properties.size(); ++i) {
    if (properties[i].name == prop) return static_cast<int>(i);
  }
  return -1;
}

const Element* Header::find(const std::string& element) const {
  for (const auto& e : elements) {
    if (e.name == element) return &e;
  }
  return nullptr;
}

int Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

Header read_header(std::istream& in) {
  std::string line;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line() || line != "ply") header_error("missing 'ply' magic");

  Header h;
  bool have_format = false;
  for (;;) {
    if (!next_line()) header_error("missing end_header");
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw.empty() || kw == "comment" || kw == "obj_info") continue;
    if (kw == "end_header") break;
    if (kw == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt == "ascii") h.format = Format::Ascii;
      else if (fmt == "binary_little_endian") h.format = Format::BinaryLittleEndian;
      else header_error("unsupported format '" + fmt + "'");
      if (ver != "1.0") header_error("unsupported version '" + ver + "'");
      have_format = true;
    } else if (kw == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (e.name.empty() || !ls || count < 0) header_error("bad element line '" + line + "'");
      e.count = static_cast<std::size_t>(count);
      h.elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (h.elements.empty()) header_error("property before element");
      Property p;
      std::string t1;
      ls >> t1;
      if (t1 == "list") {
        std::string ct, it;
        ls >> ct >> it >> p.name;
        if (!parse_type(ct, p.count_type) || !parse_type(it, p.type)) {
          header_error("bad list property '" + line + "'");
        }
        p.is_list = true;
      } else {
        if (!parse_type(t1, p.type)) header_error("unknown type '" + t1 + "'");
        ls >> p.name;
      }
      if (p.name.empty()) header_error("property without name");
      h.elements.back().properties.push_back(std::move(p));
    } else {
      header_error("unknown keyword '" + kw + "'");
    }
  }
  if (!have_format) header_error("missing format line");
  return h;
}

Table read_element(std::istream& in, const Header& header,
                   const std::string& element) {
  for (const Element& e : header.elements) {
    const bool wanted = e.name == element;
    Table t;
    if (wanted) {
      for (const Property& p : e.properties) {
        if (!p.is_list) t.columns.push_back(p);
      }
      t.rows = e.count;
      t.values.reserve(e.count * t.columns.size());
    }
    for (std::size_t r = 0; r < e.count; ++r) {
      for (const Property& p : e.properties) {
        if (p.is_list) {
          const auto n = static_cast<long long>(read_scalar(in, header.format, p.count_type));
          for (long long i = 0; i < n; ++i) read_scalar(in, header.format, p.type);
        } else {
          const double v = read_scalar(in, header.format, p.type);
          if (wanted) t.values.push_back(v);
        }
      }
    }
    if (wanted) return t;
  }
  throw Error(ErrorCode::MalformedHeader, "PLY has no '" + element + "' element");
}

void write_single_element(std::ostream& out, Format format,
                          const std::string& element,
                          const std::vector<Property>& columns,
                          std::size_t rows, const std::vector<double>& values) {
  out << "ply\n";
  out << (format == Format::Ascii ? "format ascii 1.0\n"
                                  : "format binary_little_endian 1.0\n");
  out << "element " << element << ' ' << rows << '\n';
  for (const Property& p : columns) {
    out << "property " << type_name(p.type) << ' ' << p.name << '\n';
  }
  out << "end_header\n";
  const std::size_t nc = columns.size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < nc; ++c) {
      const double v = values[r * nc + c];
      if (format == Format::Ascii) {
        if (c) out << ' ';
        write_ascii_scalar(out, columns[c].type, v);
      } else {
        write_binary_scalar(out, columns[c].type, v);
      }
    }
    if (format == Format::Ascii) out << '\n';
  }
}

}  // namespace ggrow::ply
