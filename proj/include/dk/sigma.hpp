#pragma once

// Regularized square root sigma_n and the functionals built from it.
//
// Below the cap (eta <= n):
//   sigma(eta)  = sqrt(eta + 1/n) - sqrt(1/n)
//   sigma'(eta) = 1 / (2 sqrt(eta + 1/n))
//   Sigma(eta)  = 1/4 log((eta + 1/n) / (1 + 1/n))        (Sigma' = sigma'^2, Sigma(1) = 0)
// On [n, n+1] sigma' = sigma'(n) g(u), u = eta - n, with
//   g(u) = (1-u)^2 (1 + (2 + m0) u),  m0 = sigma''(n) / sigma'(n),
// so sigma is C^2, nondecreasing, and constant for eta >= n + 1.

#include <algorithm>
#include <array>
#include <concepts>
#include <cmath>
#include <string>

#include "dk/error.hpp"

namespace dk {

struct SigmaProducts {
  double sigma = 0.0;
  double dsigma = 0.0;
  double sigma_dsigma = 0.0;   // sigma * sigma'
  double dsigma_sq = 0.0;      // (sigma')^2
  double Sigma = 0.0;          // antiderivative of (sigma')^2, Sigma(1) = 0
  double Psi = 0.0;            // eta log eta - eta
};

/// Entropy density, with 0 log 0 = 0.
inline double entropy_density(double eta) { return eta > 0.0 ? eta * std::log(eta) - eta : 0.0; }

class RegularizedSqrt {
 public:
  explicit RegularizedSqrt(int n) : n_(n) {
    if (n < 1) throw ConfigError("make_sigma: regularization index must be >= 1, got " + std::to_string(n));
    eps_ = 1.0 / n;
    sqrt_eps_ = std::sqrt(eps_);
    cap_ = static_cast<double>(n);
    d0_ = 0.5 / std::sqrt(cap_ + eps_);
    m0_ = -0.5 / (cap_ + eps_);
    k_ = 2.0 + m0_;
    sigma_cap_ = std::sqrt(cap_ + eps_) - sqrt_eps_;
    Sigma_cap_ = 0.25 * std::log((cap_ + eps_) / (1.0 + eps_));
    sigma_top_ = sigma_cap_ + d0_ * G(1.0);
    Sigma_top_ = Sigma_cap_ + d0_ * d0_ * G2(1.0);
  }

  int n() const { return n_; }
  double eps() const { return eps_; }
  double cap_start() const { return cap_; }
  double cap_end() const { return cap_ + 1.0; }
  /// sup over eta of (sigma')^2, attained at 0.
  double sup_dsigma_sq() const { return 0.25 / eps_; }
  /// Bound on sigma sigma' used for the band functional Theta_M.
  static constexpr double kSigmaDsigmaBound = 1.0;

  double sigma(double eta) const {
    check(eta);
    if (eta <= cap_) return std::sqrt(eta + eps_) - sqrt_eps_;
    if (eta >= cap_ + 1.0) return sigma_top_;
    return sigma_cap_ + d0_ * G(eta - cap_);
  }

  double dsigma(double eta) const {
    check(eta);
    if (eta <= cap_) return 0.5 / std::sqrt(eta + eps_);
    if (eta >= cap_ + 1.0) return 0.0;
    return d0_ * g(eta - cap_);
  }

  double Sigma(double eta) const {
    check(eta);
    if (eta <= cap_) return 0.25 * std::log((eta + eps_) / (1.0 + eps_));
    if (eta >= cap_ + 1.0) return Sigma_top_;
    return Sigma_cap_ + d0_ * d0_ * G2(eta - cap_);
  }

  /// Theta_M(eta) = int_0^eta sigma sigma' 1_[M, M+1] = (sigma(clamp(eta))^2 - sigma(M)^2) / 2.
  double Theta(double M, double eta) const {
    check(eta);
    if (eta <= M) return 0.0;
    const double top = std::min(eta, M + 1.0);
    const double s0 = sigma(M), s1 = sigma(top);
    return 0.5 * (s1 * s1 - s0 * s0);
  }

  SigmaProducts evaluate(double eta) const {
    SigmaProducts p;
    p.sigma = sigma(eta);
    p.dsigma = dsigma(eta);
    p.sigma_dsigma = p.sigma * p.dsigma;
    p.dsigma_sq = p.dsigma * p.dsigma;
    p.Sigma = Sigma(eta);
    p.Psi = entropy_density(eta);
    return p;
  }

 private:
  static void check(double eta) {
    if (!(eta >= 0.0)) throw DomainError("regularized sqrt evaluated at negative or NaN density");
  }

  double g(double u) const { return (1.0 - u) * (1.0 - u) * (1.0 + k_ * u); }
  // int_0^u g
  double G(double u) const {
    const double u2 = u * u;
    return u + (k_ - 2.0) * u2 / 2.0 + (1.0 - 2.0 * k_) * u2 * u / 3.0 + k_ * u2 * u2 / 4.0;
  }
  // int_0^u g^2, degree-6 integrand: 4-point Gauss-Legendre is exact
  double G2(double u) const {
    static constexpr std::array<double, 4> x{-0.8611363115940526, -0.3399810435848563,
                                             0.3399810435848563, 0.8611363115940526};
    static constexpr std::array<double, 4> w{0.3478548451374538, 0.6521451548625461,
                                             0.6521451548625461, 0.3478548451374538};
    double s = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double t = 0.5 * u * (x[i] + 1.0);
      const double gv = g(t);
      s += w[i] * gv * gv;
    }
    return 0.5 * u * s;
  }

  int n_;
  double eps_, sqrt_eps_, cap_, d0_, m0_, k_;
  double sigma_cap_, Sigma_cap_, sigma_top_, Sigma_top_;
};

inline RegularizedSqrt make_sigma(int n) { return RegularizedSqrt(n); }

/// Constant noise coefficient (sigma' = 0): the additive-noise degenerate case.
struct ConstantSigma {
  double value = 1.0;
  double sigma(double) const { return value; }
  double dsigma(double) const { return 0.0; }
  double sup_dsigma_sq() const { return 0.0; }
};

template <class S>
concept SigmaModel = requires(const S& s, double eta) {
  { s.sigma(eta) } -> std::convertible_to<double>;
  { s.dsigma(eta) } -> std::convertible_to<double>;
  { s.sup_dsigma_sq() } -> std::convertible_to<double>;
};

}  // namespace dk
