#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace ordfa {

namespace detail {

template <typename Scalar>
inline constexpr Scalar inv_sqrt_2pi =
    Scalar(0.398942280401432677939946059934381868L);

template <typename Scalar>
inline constexpr Scalar log_sqrt_2pi =
    Scalar(0.918938533204672741780329736405617639L);

template <typename Scalar>
inline Scalar pdf(Scalar x) {
  return inv_sqrt_2pi<Scalar> * std::exp(Scalar(-0.5) * x * x);
}

// Upper tail Q(x) = 1 - Phi(x).
template <typename Scalar>
inline Scalar upper_tail(Scalar x) {
  return Scalar(0.5) * std::erfc(x / std::numbers::sqrt2_v<Scalar>);
}

// Below this argument the Mills ratio is computed directly from erfc;
// above it, the continued fraction converges to full precision in 40 terms.
template <typename Scalar>
inline constexpr Scalar mills_switch = Scalar(5);

}  // namespace detail

/// Standard normal density.
template <typename Scalar>
Scalar normal_pdf(Scalar x) {
  if (std::isnan(x)) throw std::domain_error("normal_pdf: NaN argument");
  return detail::pdf(x);
}

/// Standard normal CDF, Phi(x) = 0.5 erfc(-x / sqrt(2)).
template <typename Scalar>
Scalar normal_cdf(Scalar x) {
  if (std::isnan(x)) throw std::domain_error("normal_cdf: NaN argument");
  return detail::upper_tail(-x);
}

/// Mills ratio R(a) = Q(a) / phi(a) for a >= 0 (a = +inf gives 0).
template <typename Scalar>
Scalar mills_ratio(Scalar a) {
  if (!(a >= 0)) throw std::domain_error("mills_ratio: argument must be >= 0");
  if (std::isinf(a)) return Scalar(0);
  if (a < detail::mills_switch<Scalar>)
    return detail::upper_tail(a) / detail::pdf(a);
  Scalar t = a;
  for (int k = 40; k >= 1; --k) t = a + Scalar(k) / t;
  return Scalar(1) / t;
}

/// Inverse of the standard normal CDF. Acklam's rational approximation
/// followed by one Halley correction step.
template <typename Scalar>
Scalar normal_quantile(Scalar p) {
  if (std::isnan(p) || p < 0 || p > 1)
    throw std::domain_error("normal_quantile: probability outside [0, 1]");
  if (p == 0) return -std::numeric_limits<Scalar>::infinity();
  if (p == 1) return std::numeric_limits<Scalar>::infinity();

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  const double pd = static_cast<double>(p);
  double x;
  if (pd < p_low) {
    const double q = std::sqrt(-2 * std::log(pd));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (pd <= 1 - p_low) {
    const double q = pd - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log1p(-pd));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }

  Scalar xs = static_cast<Scalar>(x);
  // Halley step on Phi(x) - p, using the tail that avoids cancellation.
  const Scalar e = xs < 0 ? detail::upper_tail(-xs) - p
                          : (Scalar(1) - p) - detail::upper_tail(xs);
  const Scalar u = e / detail::pdf(xs);
  return xs - u / (Scalar(1) + xs * u / 2);
}

/// Probability mass of a standard normal on the interval (lower, upper] and
/// the two boundary hazards needed for derivatives:
///   prob           = Phi(upper) - Phi(lower)
///   hazard_lower   = phi(lower) / prob
///   hazard_upper   = phi(upper) / prob
/// Far-tail intervals are evaluated through the Mills ratio so that
/// log_prob and both hazards stay finite whenever lower < upper.
template <typename Scalar>
struct NormalInterval {
  Scalar log_prob;
  Scalar hazard_lower;
  Scalar hazard_upper;

  /// d log(prob) / d shift when both ends move by -shift, i.e.
  /// (phi(lower) - phi(upper)) / prob.
  Scalar score() const { return hazard_lower - hazard_upper; }
};

namespace detail {

// Both ends at or above zero.
template <typename Scalar>
NormalInterval<Scalar> upper_interval(Scalar lo, Scalar hi) {
  if (lo < mills_switch<Scalar>) {
    const Scalar prob = upper_tail(lo) - upper_tail(hi);
    return {std::log(prob), pdf(lo) / prob, pdf(hi) / prob};
  }
  // Factor phi(lo) out of both the mass and the densities.
  Scalar ratio = 0;  // phi(hi) / phi(lo)
  Scalar mills_hi = 0;
  if (!std::isinf(hi)) {
    ratio = std::exp(Scalar(-0.5) * (hi - lo) * (hi + lo));
    mills_hi = mills_ratio(hi);
  }
  const Scalar scaled = mills_ratio(lo) - ratio * mills_hi;
  return {-Scalar(0.5) * lo * lo - log_sqrt_2pi<Scalar> + std::log(scaled),
          Scalar(1) / scaled, ratio / scaled};
}

}  // namespace detail

/// Evaluates the standard normal mass on (lower, upper]; requires lower < upper.
template <typename Scalar>
NormalInterval<Scalar> normal_interval(Scalar lower, Scalar upper) {
  if (lower >= 0) return detail::upper_interval(lower, upper);
  if (upper <= 0) {
    const auto m = detail::upper_interval(-upper, -lower);
    return {m.log_prob, m.hazard_upper, m.hazard_lower};
  }
  const Scalar prob =
      (Scalar(1) - detail::upper_tail(upper)) - detail::upper_tail(-lower);
  return {std::log(prob), detail::pdf(lower) / prob, detail::pdf(upper) / prob};
}

/// x * hazard with the convention that an infinite end carries no mass.
template <typename Scalar>
Scalar weighted_hazard(Scalar x, Scalar hazard) {
  return std::isinf(x) ? Scalar(0) : x * hazard;
}

}  // namespace ordfa
