#pragma once

#include <algorithm>
#include <charconv>
#include <concepts>
#include <random>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <variant>
#include <vector>

namespace sage {

enum class ErrorKind {
  invalid_argument,
  invalid_schema,
  io,
  missing_column,
  type_mismatch,
  empty_table,
  out_of_range,
  unseen_category,
  unknown_feature,
  backend_unavailable,
  malformed_response,
  no_legal_candidate,
  degenerate_target,
  malformed_polygon,
  integrity,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "InvalidArgument";
    case ErrorKind::invalid_schema: return "InvalidSchema";
    case ErrorKind::io: return "IoError";
    case ErrorKind::missing_column: return "MissingColumn";
    case ErrorKind::type_mismatch: return "TypeMismatch";
    case ErrorKind::empty_table: return "EmptyTable";
    case ErrorKind::out_of_range: return "OutOfRange";
    case ErrorKind::unseen_category: return "UnseenCategory";
    case ErrorKind::unknown_feature: return "UnknownFeature";
    case ErrorKind::backend_unavailable: return "BackendUnavailable";
    case ErrorKind::malformed_response: return "MalformedResponse";
    case ErrorKind::no_legal_candidate: return "NoLegalCandidate";
    case ErrorKind::degenerate_target: return "DegenerateTarget";
    case ErrorKind::malformed_polygon: return "MalformedPolygon";
    case ErrorKind::integrity: return "IntegrityError";
  }
  return "Unknown";
}

/// Every failure raised by the library. `kind()` is stable and machine readable.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// A cell value: finite number for numerical features, text for categorical ones.
using Value = std::variant<double, std::string>;
using Record = std::vector<Value>;

/// Dense id of a pseudo-feature (one bin or one category of some feature).
using PseudoId = std::uint32_t;

inline bool is_number(const Value& v) { return std::holds_alternative<double>(v); }
inline double as_number(const Value& v) { return std::get<double>(v); }
inline const std::string& as_text(const Value& v) { return std::get<std::string>(v); }

/// Shortest decimal form that parses back to the same double.
inline std::string format_number(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string format_value(const Value& v) {
  return is_number(v) ? format_number(as_number(v)) : as_text(v);
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

/// Locale-independent parse of a finite decimal or scientific-notation number.
inline bool parse_number(std::string_view text, double& out) {
  text = trim(text);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return false;
  if (!std::isfinite(value)) return false;
  out = value;
  return true;
}

// ---------------------------------------------------------------------------
// Random numbers. The engines are std; the derivations below are spelled out
// so that streams and draws do not depend on the standard library vendor.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for an independent stream identified by (seed, index).
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

template <std::uniform_random_bit_generator Rng>
double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Unbiased integer in [0, n).
template <std::uniform_random_bit_generator Rng>
std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n <= 1) return 0;
  const std::uint64_t bound = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return static_cast<std::size_t>(x % bound);
}

template <class T, std::uniform_random_bit_generator Rng>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

// ---------------------------------------------------------------------------
// Statistics helpers shared by binning, the dependency graph and the sweep.

/// Linear-interpolation quantile (Hyndman-Fan type 7) of already sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorKind::invalid_argument, "quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorKind::invalid_argument, "quantile outside [0,1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, q);
}

/// Median; an even count averages the two middle values.
inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

inline double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

// ---------------------------------------------------------------------------

/// Resolve a requested worker count; 0 means hardware concurrency.
inline unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs fn(begin, end) over contiguous chunks of [0, n). Exceptions from
/// workers are rethrown on the calling thread (first one wins).
template <class Fn>
void parallel_chunks(std::size_t n, unsigned threads, Fn&& fn) {
  threads = resolve_threads(threads);
  if (threads <= 1 || n < 2) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, w, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  parallel_chunks(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
  });
}

}  // namespace sage
