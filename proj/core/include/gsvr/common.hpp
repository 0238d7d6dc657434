// Shared infrastructure: typed errors, deterministic RNG, parallel execution.
#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsvr {

// Exit codes for the CLI; library errors carry the code they map to.
enum class ExitCode : int {
  ok = 0,
  usage = 1,
  io = 2,
  validation = 3,
  divergence = 4,
};

// Distinct failure modes of the binary/text file formats.
enum class FormatError : int {
  bad_magic = 1,
  unsupported_version,
  truncated_payload,
  size_mismatch,
  unsupported_encoding,
  unknown_key,
  missing_key,
  bad_value,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
  ExitCode exit_code() const { return code_; }

 private:
  ExitCode code_;
};

class IoError : public Error {
 public:
  explicit IoError(std::string msg) : Error(ExitCode::io, std::move(msg)) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(std::string msg) : Error(ExitCode::validation, std::move(msg)) {}
};

class FileFormatError : public Error {
 public:
  FileFormatError(FormatError kind, std::string msg)
      : Error(ExitCode::validation, std::move(msg)), kind_(kind) {}
  FormatError kind() const { return kind_; }

 private:
  FormatError kind_;
};

class DivergedError : public Error {
 public:
  DivergedError(long iteration, std::string msg)
      : Error(ExitCode::divergence, std::move(msg)), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

// splitmix64; used to derive independent seeds from a base seed and stream ids.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// Deterministic RNG with portable distributions (bit-identical across
// standard libraries; std::uniform_real_distribution is not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {
    for (int i = 0; i < 4; ++i) next();
  }

  std::uint64_t next();

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Inclusive integer range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal via Box-Muller (no cached spare, keeps the stream simple).
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  Rng fork(std::uint64_t stream) const { return Rng(mix_seed(state_, stream, 0x5bf03635)); }

 private:
  std::uint64_t state_;
};

// Fixed-size thread pool shared per process. Work is split into a
// caller-chosen number of chunks; chunk boundaries depend only on the item
// count, never on the thread count, so any reduction that merges per-chunk
// buffers in chunk order is bit-reproducible for 1..N threads.
class ThreadPool {
 public:
  static ThreadPool& instance();

  void set_thread_count(int n);
  int thread_count() const { return threads_; }

  // Runs fn(chunk_index) for chunk_index in [0, num_chunks).
  void run_chunks(int num_chunks, const std::function<void(int)>& fn);

 private:
  ThreadPool() = default;
  int threads_ = 0;  // 0 = hardware concurrency
};

// Splits [0, n) into num_chunks contiguous ranges and runs
// fn(chunk, begin, end) for each non-empty range on the pool.
void parallel_chunks(std::size_t n, int num_chunks,
                     const std::function<void(int, std::size_t, std::size_t)>& fn);

// Convenience: parallel map over [0, n) with a default chunk count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace gsvr
