#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace decmarl {

// Mixed-radix flat index over a tuple of digits; digit 0 is most significant,
// so flat order is lexicographic order on the tuple.
class MixedRadix {
 public:
  MixedRadix() = default;
  explicit MixedRadix(std::vector<std::int64_t> radices);

  std::size_t num_digits() const { return radices_.size(); }
  std::int64_t radix(std::size_t i) const { return radices_[i]; }
  std::int64_t size() const { return size_; }

  template <class T>
  std::int64_t encode(std::span<const T> digits) const {
    if (digits.size() != radices_.size()) throw std::invalid_argument("MixedRadix: digit count mismatch");
    std::int64_t flat = 0;
    for (std::size_t i = 0; i < digits.size(); ++i) {
      const auto d = static_cast<std::int64_t>(digits[i]);
      if (d < 0 || d >= radices_[i]) throw std::out_of_range("MixedRadix: digit out of range");
      flat = flat * radices_[i] + d;
    }
    return flat;
  }
  template <class T>
  std::int64_t encode(const std::vector<T>& digits) const {
    return encode(std::span<const T>(digits));
  }

  template <class T>
  void decode(std::int64_t flat, std::span<T> digits) const {
    if (digits.size() != radices_.size()) throw std::invalid_argument("MixedRadix: digit count mismatch");
    if (flat < 0 || flat >= size_) throw std::out_of_range("MixedRadix: flat index out of range");
    for (std::size_t i = radices_.size(); i-- > 0;) {
      digits[i] = static_cast<T>(flat % radices_[i]);
      flat /= radices_[i];
    }
  }

  // Digit `i` of `flat` without decoding the whole tuple.
  std::int64_t digit(std::int64_t flat, std::size_t i) const { return (flat / strides_[i]) % radices_[i]; }

 private:
  std::vector<std::int64_t> radices_;
  std::vector<std::int64_t> strides_;
  std::int64_t size_ = 1;
};

}  // namespace decmarl
