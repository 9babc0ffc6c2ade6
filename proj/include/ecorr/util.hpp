#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ecorr {

/// Lower-case hex SHA-256 of a byte buffer.
std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_hex(std::span<const double> values);

/// Runs fn(i) for i in [0, n) on `threads` workers. Each index is processed
/// exactly once; callers write results into index-addressed slots so the
/// outcome does not depend on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Neumaier-compensated sum.
double compensated_sum(std::span<const double> values);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Little-endian float64 byte encoding regardless of host order.
void append_f64le(std::string& out, double v);
double read_f64le(const unsigned char* p);
void append_f32le(std::string& out, float v);
float read_f32le(const unsigned char* p);

inline constexpr std::string_view kToolVersion = "0.1.0";

}  // namespace ecorr
