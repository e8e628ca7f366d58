#pragma once

#include <cmath>
#include <limits>

#include "corrgee/error.hpp"

namespace corrgee {

inline constexpr double kZ975 = 1.9599639845400542;  // 97.5% standard normal quantile

// Standard normal CDF.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

// Standard normal quantile, Wichura's algorithm AS 241 (PPND16), relative
// accuracy ~1e-16 over (0,1).
inline double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        throw Error("norm_quantile: p must lie in [0,1], got " + std::to_string(p));
    }
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                     6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                   1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
                 1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
               (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                     3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                   5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
                 4.2313330701600911252e+1) * r + 1.0);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double x;
    if (r <= 5.0) {
        r -= 1.6;
        x = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
    } else {
        r -= 5.0;
        x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
    }
    return q < 0.0 ? -x : x;
}

namespace detail {

// Gauss-Legendre abscissae/weights on (-1,1), 6/12/20 points.
inline constexpr double kGLX[3][10] = {
    {-0.9324695142031521, -0.6612093864662645, -0.2386191860831969, 0, 0, 0, 0, 0, 0, 0},
    {-0.9815606342467192, -0.9041172563704749, -0.7699026741943047, -0.5873179542866175,
     -0.3678314989981802, -0.1252334085114689, 0, 0, 0, 0},
    {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259, -0.8391169718222188,
     -0.7463319064601508, -0.6360536807265150, -0.5108670019508271, -0.3737060887154195,
     -0.2277858511416451, -0.07652652113349734}};
inline constexpr double kGLW[3][10] = {
    {0.1713244923791704, 0.3607615730481386, 0.4679139345726910, 0, 0, 0, 0, 0, 0, 0},
    {0.04717533638651183, 0.1069393259953184, 0.1600783285433462, 0.2031674267230659,
     0.2334925365383548, 0.2491470458134028, 0, 0, 0, 0},
    {0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
     0.1019301198172404, 0.1181945319615184, 0.1316886384491766, 0.1420961093183821,
     0.1491729864726037, 0.1527533871307259}};

// Upper-quadrant probability P(X > h, Y > k) for standard bivariate normal
// with correlation r.  Genz's hybrid scheme (Drezner-Wesolowsky transformed
// integrand for |r| < 0.925, complementary expansion otherwise); absolute
// accuracy near double precision.
inline double bvn_upper(double h, double k, double r) {
    const double twopi = 2.0 * M_PI;
    int ng;
    int lg;
    const double ar = std::fabs(r);
    if (ar < 0.3) {
        ng = 0;
        lg = 3;
    } else if (ar < 0.75) {
        ng = 1;
        lg = 6;
    } else {
        ng = 2;
        lg = 10;
    }
    double hk = h * k;
    double bvn = 0.0;
    if (ar < 0.925) {
        const double hs = (h * h + k * k) / 2.0;
        const double asr = std::asin(r);
        for (int i = 0; i < lg; ++i) {
            double sn = std::sin(asr * (kGLX[ng][i] + 1.0) / 2.0);
            bvn += kGLW[ng][i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            sn = std::sin(asr * (-kGLX[ng][i] + 1.0) / 2.0);
            bvn += kGLW[ng][i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
        }
        return bvn * asr / (2.0 * twopi) + norm_cdf(-h) * norm_cdf(-k);
    }
    if (r < 0.0) {
        k = -k;
        hk = -hk;
    }
    if (ar < 1.0) {
        const double as = (1.0 - r) * (1.0 + r);
        double a = std::sqrt(as);
        const double bs = (h - k) * (h - k);
        const double c = (4.0 - hk) / 8.0;
        const double d = (12.0 - hk) / 16.0;
        bvn = a * std::exp(-(bs / as + hk) / 2.0) *
              (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
        if (hk > -160.0) {
            const double b = std::sqrt(bs);
            bvn -= std::exp(-hk / 2.0) * std::sqrt(twopi) * norm_cdf(-b / a) * b *
                   (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for (int i = 0; i < lg; ++i) {
            double xs = a * (kGLX[ng][i] + 1.0);
            xs *= xs;
            double rs = std::sqrt(1.0 - xs);
            bvn += a * kGLW[ng][i] *
                   (std::exp(-bs / (2.0 * xs) - hk / (1.0 + rs)) / rs -
                    std::exp(-(bs / xs + hk) / 2.0) * (1.0 + c * xs * (1.0 + d * xs)));
            xs = as * (-kGLX[ng][i] + 1.0) * (-kGLX[ng][i] + 1.0) / 4.0;
            rs = std::sqrt(1.0 - xs);
            bvn += a * kGLW[ng][i] * std::exp(-(bs / xs + hk) / 2.0) *
                   (std::exp(-hk * xs / (2.0 * (1.0 + rs) * (1.0 + rs))) / rs -
                    (1.0 + c * xs * (1.0 + d * xs)));
        }
        bvn = -bvn / twopi;
    }
    if (r > 0.0) return bvn + norm_cdf(-std::max(h, k));
    bvn = -bvn;
    if (k > h) bvn += norm_cdf(k) - norm_cdf(h);
    return bvn;
}

}  // namespace detail

// P(X <= h, Y <= k) for standard bivariate normal variables with correlation r.
inline double bvn_cdf(double h, double k, double r) {
    if (!(r >= -1.0 && r <= 1.0)) throw Error("bvn_cdf: correlation outside [-1,1]");
    if (r == 1.0) return norm_cdf(std::min(h, k));
    if (r == -1.0) return std::max(0.0, norm_cdf(h) + norm_cdf(k) - 1.0);
    return detail::bvn_upper(-h, -k, r);
}

// Bivariate standard normal density; this is also dPhi2(h,k;r)/dr.
inline double bvn_pdf(double h, double k, double r) {
    const double omr2 = 1.0 - r * r;
    return std::exp(-(h * h - 2.0 * r * h * k + k * k) / (2.0 * omr2)) /
           (2.0 * M_PI * std::sqrt(omr2));
}

}  // namespace corrgee
