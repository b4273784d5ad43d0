#include "dumpy/distance.hpp"

#include <algorithm>
#include <cmath>

namespace dumpy {

namespace {

template <typename T>
double ed_sq_impl(std::span<const T> a, std::span<const T> b, double bound) {
    if (a.size() != b.size()) throw InvalidArgument("ed: length mismatch");
    double sum = 0.0;
    const std::size_t n = a.size();
    std::size_t i = 0;
    // Check the bound every 16 points; the summation order stays left to right.
    while (i < n) {
        const std::size_t end = std::min(n, i + 16);
        for (; i < end; ++i) {
            const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            sum += d * d;
        }
        if (sum > bound) return sum;
    }
    return sum;
}

template <typename T>
double dtw_sq_impl(std::span<const T> a, std::span<const T> b, std::size_t window, double bound) {
    if (a.size() != b.size()) throw InvalidArgument("dtw: length mismatch");
    const std::size_t n = a.size();
    if (n == 0) return 0.0;
    const std::size_t r = std::min(window, n - 1);
    std::vector<double> prev(n, kInf);
    std::vector<double> cur(n, kInf);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t jlo = i > r ? i - r : 0;
        const std::size_t jhi = std::min(n - 1, i + r);
        double row_min = kInf;
        if (jlo > 0) cur[jlo - 1] = kInf;
        for (std::size_t j = jlo; j <= jhi; ++j) {
            const double d = static_cast<double>(a[i]) - static_cast<double>(b[j]);
            double best;
            if (i == 0 && j == 0) {
                best = 0.0;
            } else {
                best = kInf;
                if (i > 0) best = std::min(best, prev[j]);
                if (j > 0) best = std::min(best, cur[j - 1]);
                if (i > 0 && j > 0) best = std::min(best, prev[j - 1]);
            }
            cur[j] = best + d * d;
            row_min = std::min(row_min, cur[j]);
        }
        if (jhi + 1 < n) cur[jhi + 1] = kInf;
        if (row_min > bound) return kInf;
        std::swap(prev, cur);
    }
    return prev[n - 1];
}

}  // namespace

DistanceKind DistanceKind::dtw(double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw InvalidArgument("DTW window ratio must be in (0, 1]");
    return {Kind::DTW, ratio};
}

std::size_t DistanceKind::window(std::size_t n) const {
    return static_cast<std::size_t>(std::ceil(window_ratio * static_cast<double>(n) - 1e-12));
}

double ed_sq(std::span<const float> a, std::span<const float> b, double bound) {
    return ed_sq_impl(a, b, bound);
}

double ed(std::span<const float> a, std::span<const float> b) { return std::sqrt(ed_sq_impl(a, b, kInf)); }

double ed(std::span<const double> a, std::span<const double> b) { return std::sqrt(ed_sq_impl(a, b, kInf)); }

double dtw_sq(std::span<const float> a, std::span<const float> b, std::size_t window, double bound) {
    return dtw_sq_impl(a, b, window, bound);
}

double dtw(std::span<const float> a, std::span<const float> b, double window_ratio) {
    return std::sqrt(dtw_sq_impl(a, b, DistanceKind::dtw(window_ratio).window(a.size()), kInf));
}

double dtw(std::span<const double> a, std::span<const double> b, double window_ratio) {
    return std::sqrt(dtw_sq_impl(a, b, DistanceKind::dtw(window_ratio).window(a.size()), kInf));
}

Envelope make_envelope(std::span<const float> q, std::size_t window) {
    const std::size_t n = q.size();
    Envelope env{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i > window ? i - window : 0;
        const std::size_t hi = std::min(n - 1, i + window);
        double u = -kInf;
        double l = kInf;
        for (std::size_t j = lo; j <= hi; ++j) {
            u = std::max(u, static_cast<double>(q[j]));
            l = std::min(l, static_cast<double>(q[j]));
        }
        env.upper[i] = u;
        env.lower[i] = l;
    }
    return env;
}

double lb_keogh_sq(const Envelope& env, std::span<const float> s, double bound) {
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double v = s[i];
        if (v > env.upper[i]) {
            sum += (v - env.upper[i]) * (v - env.upper[i]);
        } else if (v < env.lower[i]) {
            sum += (env.lower[i] - v) * (env.lower[i] - v);
        }
        if (sum > bound) return sum;
    }
    return sum;
}

double lb_isax_ed_sq(std::span<const double> query_paa, const IsaxWord& node, const SaxAlphabet& alphabet,
                     std::size_t n) {
    const int w = node.segments();
    double sum = 0.0;
    for (int seg = 0; seg < w; ++seg) {
        if (node.depth(seg) == 0) continue;
        sum += gap_sq(query_paa[seg], alphabet.range(node.code(seg), node.depth(seg)));
    }
    return sum * (static_cast<double>(n) / static_cast<double>(w));
}

double lb_isax_ed(std::span<const double> query_paa, const IsaxWord& node, std::size_t n) {
    return std::sqrt(lb_isax_ed_sq(query_paa, node, SaxAlphabet(node.bits()), n));
}

EnvelopePaa envelope_paa(const Envelope& env, std::size_t w) {
    return {paa(std::span<const double>(env.upper), w), paa(std::span<const double>(env.lower), w)};
}

double lb_isax_dtw_sq(const EnvelopePaa& env, const IsaxWord& node, const SaxAlphabet& alphabet, std::size_t n) {
    const int w = node.segments();
    double sum = 0.0;
    for (int seg = 0; seg < w; ++seg) {
        if (node.depth(seg) == 0) continue;
        const ValueRange r = alphabet.range(node.code(seg), node.depth(seg));
        if (env.lower[seg] > r.hi) {
            sum += (env.lower[seg] - r.hi) * (env.lower[seg] - r.hi);
        } else if (env.upper[seg] < r.lo) {
            sum += (r.lo - env.upper[seg]) * (r.lo - env.upper[seg]);
        }
    }
    return sum * (static_cast<double>(n) / static_cast<double>(w));
}

double lb_isax_dtw(std::span<const float> query, const IsaxWord& node, double window_ratio) {
    const Envelope env = make_envelope(query, DistanceKind::dtw(window_ratio).window(query.size()));
    return std::sqrt(
        lb_isax_dtw_sq(envelope_paa(env, node.segments()), node, SaxAlphabet(node.bits()), query.size()));
}

}  // namespace dumpy
