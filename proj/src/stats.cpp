#include "ehd/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ehd::stats {

double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean: empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) /
         static_cast<double>(v.size());
}

double stddev_pop(const std::vector<double>& v) {
  double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace {

// Lentz continued fraction for the incomplete beta.
double betacf(double a, double b, double x) {
  const int kMaxIter = 300;
  const double eps = 3e-14, fpmin = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                 a * std::log(x) + b * std::log1p(-x);
  double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

namespace {

// P(T > t) for Student's t with nu degrees of freedom
double t_sf(double t, double nu) {
  double p = 0.5 * incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t));
  return t >= 0.0 ? p : 1.0 - p;
}

double sample_var(const std::vector<double>& v, double m) {
  if (v.size() < 2) throw std::invalid_argument("variance: need n >= 2");
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size() - 1);
}

}  // namespace

double t_test_greater(const std::vector<double>& a,
                      const std::vector<double>& b) {
  double ma = mean(a), mb = mean(b);
  double va = sample_var(a, ma), vb = sample_var(b, mb);
  double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double se2 = va / na + vb / nb;
  if (se2 == 0.0) return ma > mb ? 0.0 : 1.0;
  double t = (ma - mb) / std::sqrt(se2);
  // Welch-Satterthwaite degrees of freedom
  double nu = se2 * se2 /
              (va * va / (na * na * (na - 1.0)) +
               vb * vb / (nb * nb * (nb - 1.0)));
  return t_sf(t, nu);
}

double paired_t_test_greater(const std::vector<double>& a,
                             const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("paired t-test: size mismatch");
  std::vector<double> d(a.size());
  for (size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  double m = mean(d);
  double v = sample_var(d, m);
  double n = static_cast<double>(d.size());
  if (v == 0.0) return m > 0.0 ? 0.0 : 1.0;
  return t_sf(m / std::sqrt(v / n), n - 1.0);
}

double sign_test_less(const std::vector<double>& x,
                      const std::vector<double>& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("sign test: size mismatch");
  long n = 0, wins = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (x[i] == y[i]) continue;
    ++n;
    if (x[i] < y[i]) ++wins;
  }
  if (n == 0) return 1.0;
  // exact upper binomial tail P(Bin(n, 1/2) >= wins)
  double p = 0.0;
  double log_half_n = n * std::log(0.5);
  for (long k = wins; k <= n; ++k) {
    double log_c = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                   std::lgamma(n - k + 1.0);
    p += std::exp(log_c + log_half_n);
  }
  return std::min(p, 1.0);
}

double two_proportion_greater(std::int64_t k1, std::int64_t n1,
                              std::int64_t k2, std::int64_t n2) {
  if (n1 <= 0 || n2 <= 0) return 1.0;
  double p1 = static_cast<double>(k1) / n1;
  double p2 = static_cast<double>(k2) / n2;
  double pool = static_cast<double>(k1 + k2) / static_cast<double>(n1 + n2);
  double se = std::sqrt(pool * (1.0 - pool) * (1.0 / n1 + 1.0 / n2));
  if (se == 0.0) return p1 > p2 ? 0.0 : 1.0;
  return 1.0 - normal_cdf((p1 - p2) / se);
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<size_t> order(v.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) r[order[k]] = avg;  // mid-rank for ties
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman_rho(const std::vector<double>& a,
                    const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need matched samples, n >= 2");
  auto ra = ranks(a), rb = ranks(b);
  double ma = mean(ra), mb = mean(rb);
  double num = 0.0, da = 0.0, db = 0.0;
  for (size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0.0 || db == 0.0) return 0.0;
  return num / std::sqrt(da * db);
}

double loglog_slope(const std::vector<double>& x,
                    const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("loglog_slope: need matched samples, n >= 2");
  std::vector<double> lx(x.size()), ly(y.size());
  for (size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0.0 || y[i] <= 0.0)
      throw std::invalid_argument("loglog_slope: non-positive sample");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  double mx = mean(lx), my = mean(ly);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < lx.size(); ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  if (den == 0.0) throw std::invalid_argument("loglog_slope: degenerate x");
  return num / den;
}

}  // namespace ehd::stats
