#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

// Explicit little-endian encoding for cache and checkpoint files.
namespace tempoproj::binary {

void write_u32(std::ostream& out, std::uint32_t value);
void write_u64(std::ostream& out, std::uint64_t value);
void write_i64(std::ostream& out, std::int64_t value);
void write_f64(std::ostream& out, double value);
void write_f64s(std::ostream& out, std::span<const double> values);
void write_string(std::ostream& out, const std::string& value);

std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
std::int64_t read_i64(std::istream& in);
double read_f64(std::istream& in);
std::vector<double> read_f64s(std::istream& in, std::size_t count);
std::string read_string(std::istream& in);

/// 64-bit FNV-1a, used for content-addressed cache names.
class Fnv1a {
 public:
  void update(std::span<const unsigned char> bytes);
  void update_u64(std::uint64_t value);
  void update_f64(double value);
  void update_string(const std::string& value);
  std::uint64_t digest() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

std::string hex(std::uint64_t value);

}  // namespace tempoproj::binary
