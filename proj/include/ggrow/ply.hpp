// SPDX-License-Identifier: Apache-2.0
//
// Minimal PLY container I/O: header parsing, scalar-property element
// tables, and writing a single-element file. List properties are supported
// only for skipping (faces etc. after or before the vertex block).

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ggrow::ply {

enum class Format { Ascii, BinaryLittleEndian };

enum class Type { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

struct Property {
  std::string name;
  Type type = Type::Float32;
  bool is_list = false;
  Type count_type = Type::UInt8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
  int find(const std::string& prop) const;
};

struct Header {
  Format format = Format::Ascii;
  std::vector<Element> elements;
  const Element* find(const std::string& element) const;
};

/// Scalar columns of one element, row-major, widened to double (exact for
/// every PLY scalar type).
struct Table {
  std::vector<Property> columns;
  std::size_t rows = 0;
  std::vector<double> values;

  int column(const std::string& name) const;
  double at(std::size_t row, int col) const {
    return values[row * columns.size() + static_cast<std::size_t>(col)];
  }
};

std::size_t type_size(Type t);
const char* type_name(Type t);
bool is_float(Type t);

/// Parses the header; leaves the stream at the first body byte.
/// Throws ggrow::Error(MalformedHeader) on any structural problem.
Header read_header(std::istream& in);

/// Reads the body up to and including `element`, returning its table.
/// Elements before it are skipped; elements after it are not touched.
Table read_element(std::istream& in, const Header& header,
                   const std::string& element);

/// Writes a file holding one element with scalar properties.
void write_single_element(std::ostream& out, Format format,
                          const std::string& element,
                          const std::vector<Property>& columns,
                          std::size_t rows, const std::vector<double>& values);

}  // namespace ggrow::ply
