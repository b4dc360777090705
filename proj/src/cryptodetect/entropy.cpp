#include "rwdecoy/cryptodetect/entropy.hpp"

#include <array>
#include <cmath>

namespace rwdecoy::cryptodetect {

double shannon_entropy(std::span<const std::uint8_t> buffer) {
  if (buffer.empty()) throw Error(ErrorCode::empty_buffer, "entropy of an empty buffer is undefined");
  // Four tables so runs of the same byte don't serialize on one counter.
  std::array<std::array<std::uint64_t, 256>, 4> lanes{};
  const std::size_t n4 = buffer.size() & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    ++lanes[0][buffer[i]];
    ++lanes[1][buffer[i + 1]];
    ++lanes[2][buffer[i + 2]];
    ++lanes[3][buffer[i + 3]];
  }
  for (std::size_t i = n4; i < buffer.size(); ++i) ++lanes[0][buffer[i]];
  std::array<std::uint64_t, 256> counts{};
  for (const auto& lane : lanes)
    for (std::size_t v = 0; v < 256; ++v) counts[v] += lane[v];
  const double n = static_cast<double>(buffer.size());
  double h = 0.0;
  for (std::uint64_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

void EntropyPolicy::validate() const {
  if (!(threshold > 0.0 && threshold <= 8.0)) throw Error(ErrorCode::format, "entropy threshold must be in (0, 8]");
  if (consecutive_k < 1) throw Error(ErrorCode::format, "consecutive_k must be at least 1");
}

EntropyStep entropy_step(EntropyCounter& counter, const std::string& path, std::span<const std::uint8_t> buffer,
                         const EntropyPolicy& policy) {
  EntropyStep step;
  if (counter.flag || buffer.size() < policy.min_window || counter.counted_paths.contains(path)) {
    step.flag_set = counter.flag;
    return step;
  }
  if (shannon_entropy(buffer) >= policy.threshold) {
    counter.counted_paths.insert(path);
    step.counted = true;
    if (counter.count() >= policy.consecutive_k) counter.flag = true;
  }
  step.flag_set = counter.flag;
  return step;
}

}  // namespace rwdecoy::cryptodetect
