#pragma once

// Complex node signals and the small amount of vector arithmetic the
// estimators need. Signals live on graph nodes; entry i is the value of the
// signal in node i's (one-dimensional complex) fiber.

#include <complex>
#include <cstddef>
#include <vector>

namespace forestsync {

using cplx = std::complex<double>;
using ComplexSignal = std::vector<cplx>;

// Hermitian inner product <a, b> = sum_i conj(a_i) b_i.
cplx inner(const ComplexSignal& a, const ComplexSignal& b);

double norm2(const ComplexSignal& a);        // Euclidean norm
double norm2_sq(const ComplexSignal& a);     // squared Euclidean norm
double dist2(const ComplexSignal& a, const ComplexSignal& b);

// Q-weighted squared norm sum_i q_i |a_i|^2.
double weighted_norm2_sq(const ComplexSignal& a, const std::vector<double>& q);

void axpy(cplx alpha, const ComplexSignal& x, ComplexSignal& y);  // y += alpha x
void scale(ComplexSignal& a, cplx alpha);

}  // namespace forestsync
