#pragma once

#include <set>
#include <string>

#include "rwdecoy/common.hpp"

namespace rwdecoy::cryptodetect {

// Shannon entropy in bits per byte. Throws Error(empty_buffer) on empty input.
double shannon_entropy(std::span<const std::uint8_t> buffer);

struct EntropyPolicy {
  double threshold = 7.2;
  std::size_t min_window = 4096;
  std::uint32_t consecutive_k = 5;

  void validate() const;
};

// Per-process state: which distinct files have received a high-entropy write.
struct EntropyCounter {
  std::set<std::string> counted_paths;
  bool flag = false;

  std::size_t count() const { return counted_paths.size(); }
};

struct EntropyStep {
  bool counted = false;
  bool flag_set = false;
};

EntropyStep entropy_step(EntropyCounter& counter, const std::string& path, std::span<const std::uint8_t> buffer,
                         const EntropyPolicy& policy);

}  // namespace rwdecoy::cryptodetect
