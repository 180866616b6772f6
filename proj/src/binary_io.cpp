#include "tempoproj/binary_io.hpp"

#include <array>
#include <bit>
#include <cstdio>

#include "tempoproj/error.hpp"

namespace tempoproj::binary {

namespace {

template <std::size_t N>
void put(std::ostream& out, std::uint64_t value) {
  std::array<char, N> bytes{};
  for (std::size_t i = 0; i < N; ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), N);
}

template <std::size_t N>
std::uint64_t get(std::istream& in) {
  std::array<unsigned char, N> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), N);
  if (!in) fail(ErrorKind::Format, "unexpected end of binary file");
  std::uint64_t value = 0;
  for (std::size_t i = 0; i < N; ++i) value |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t value) { put<4>(out, value); }
void write_u64(std::ostream& out, std::uint64_t value) { put<8>(out, value); }
void write_i64(std::ostream& out, std::int64_t value) { put<8>(out, std::bit_cast<std::uint64_t>(value)); }
void write_f64(std::ostream& out, double value) { put<8>(out, std::bit_cast<std::uint64_t>(value)); }

void write_f64s(std::ostream& out, std::span<const double> values) {
  for (double v : values) write_f64(out, v);
}

void write_string(std::ostream& out, const std::string& value) {
  write_u64(out, value.size());
  out.write(value.data(), static_cast<std::streamsize>(value.size()));
}

std::uint32_t read_u32(std::istream& in) { return static_cast<std::uint32_t>(get<4>(in)); }
std::uint64_t read_u64(std::istream& in) { return get<8>(in); }
std::int64_t read_i64(std::istream& in) { return std::bit_cast<std::int64_t>(get<8>(in)); }
double read_f64(std::istream& in) { return std::bit_cast<double>(get<8>(in)); }

std::vector<double> read_f64s(std::istream& in, std::size_t count) {
  std::vector<double> values(count);
  for (auto& v : values) v = read_f64(in);
  return values;
}

std::string read_string(std::istream& in) {
  const auto size = read_u64(in);
  if (size > (1ULL << 32)) fail(ErrorKind::Format, "string length out of range");
  std::string value(size, '\0');
  in.read(value.data(), static_cast<std::streamsize>(size));
  if (!in) fail(ErrorKind::Format, "unexpected end of binary file");
  return value;
}

void Fnv1a::update(std::span<const unsigned char> bytes) {
  for (unsigned char b : bytes) {
    hash_ ^= b;
    hash_ *= 0x100000001b3ULL;
  }
}

void Fnv1a::update_u64(std::uint64_t value) {
  std::array<unsigned char, 8> bytes{};
  for (std::size_t i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  update(bytes);
}

void Fnv1a::update_f64(double value) { update_u64(std::bit_cast<std::uint64_t>(value)); }

void Fnv1a::update_string(const std::string& value) {
  update_u64(value.size());
  update({reinterpret_cast<const unsigned char*>(value.data()), value.size()});
}

std::string hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace tempoproj::binary
