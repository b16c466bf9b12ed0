#include "forestsync/complex_signal.hpp"

#include <cassert>
#include <cmath>

namespace forestsync {

cplx inner(const ComplexSignal& a, const ComplexSignal& b) {
  assert(a.size() == b.size());
  cplx s{0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

double norm2_sq(const ComplexSignal& a) {
  double s = 0.0;
  for (const cplx& v : a) s += std::norm(v);
  return s;
}

double norm2(const ComplexSignal& a) { return std::sqrt(norm2_sq(a)); }

double dist2(const ComplexSignal& a, const ComplexSignal& b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a[i] - b[i]);
  return std::sqrt(s);
}

double weighted_norm2_sq(const ComplexSignal& a, const std::vector<double>& q) {
  assert(a.size() == q.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += q[i] * std::norm(a[i]);
  return s;
}

void axpy(cplx alpha, const ComplexSignal& x, ComplexSignal& y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void scale(ComplexSignal& a, cplx alpha) {
  for (cplx& v : a) v *= alpha;
}

}  // namespace forestsync
