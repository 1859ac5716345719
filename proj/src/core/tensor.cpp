#include "core/tensor.hpp"

#include <cmath>
#include <sstream>

#ifdef __GLIBC__
#include <malloc.h>
namespace {
// Tensor workloads churn through multi-MB buffers; without this glibc mmaps
// and unmaps them each time and every op pays kernel page-zeroing costs.
[[maybe_unused]] const bool g_malloc_tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
    return true;
}();
}  // namespace
#endif

namespace fscs {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
        if (d <= 0) throw std::invalid_argument("tensor: non-positive extent in " + shape_str(s));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

template <typename T>
bool Tensor<T>::all_finite() const {
    for (const T& v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace fscs
