#include "recoverlab/net.hpp"

namespace recoverlab {

template struct DenseNet<float>;
template struct DenseNet<double>;
template struct AdamState<float>;
template struct AdamState<double>;

}  // namespace recoverlab
