#include "decmarl/indexing.hpp"

#include <limits>

namespace decmarl {

MixedRadix::MixedRadix(std::vector<std::int64_t> radices) : radices_(std::move(radices)) {
  strides_.assign(radices_.size(), 1);
  size_ = 1;
  for (std::size_t i = radices_.size(); i-- > 0;) {
    if (radices_[i] < 1) throw std::invalid_argument("MixedRadix: radix must be positive");
    strides_[i] = size_;
    if (size_ > std::numeric_limits<std::int64_t>::max() / radices_[i]) {
      throw std::overflow_error("MixedRadix: index space exceeds 64 bits");
    }
    size_ *= radices_[i];
  }
}

}  // namespace decmarl
