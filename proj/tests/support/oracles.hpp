#pragma once

// Independent reference implementations used as test oracles. These are kept
// deliberately naive and separate from the library code paths they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace oracles {

// Top-down Levenshtein recursion over all alignments, memoized.
template <class Seq>
std::size_t lev_recursive(const Seq& a, const Seq& b) {
    const std::size_t m = a.size(), n = b.size();
    std::vector<std::size_t> memo((m + 1) * (n + 1), static_cast<std::size_t>(-1));
    auto rec = [&](auto&& self, std::size_t i, std::size_t j) -> std::size_t {
        std::size_t& slot = memo[i * (n + 1) + j];
        if (slot != static_cast<std::size_t>(-1)) return slot;
        if (i == 0) return slot = j;
        if (j == 0) return slot = i;
        std::size_t del = self(self, i - 1, j) + 1;
        std::size_t ins = self(self, i, j - 1) + 1;
        std::size_t sub = self(self, i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1);
        return slot = std::min({del, ins, sub});
    };
    return rec(rec, m, n);
}

// Textbook corpus BLEU-4: uniform weights, per-ngram clipped counts against
// the max reference count, closest-reference brevity penalty (ties -> shorter
// reference), add-one smoothing for n >= 2 when the match count is zero.
inline double bleu_reference(const std::vector<std::vector<std::string>>& candidates,
                             const std::vector<std::vector<std::vector<std::string>>>& references) {
    auto ngrams = [](const std::vector<std::string>& toks, std::size_t n) {
        std::map<std::vector<std::string>, std::size_t> counts;
        if (toks.size() >= n)
            for (std::size_t i = 0; i + n <= toks.size(); ++i)
                ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                                  toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
        return counts;
    };

    double matched[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
    double cand_len = 0, ref_len = 0;
    for (std::size_t s = 0; s < candidates.size(); ++s) {
        const auto& cand = candidates[s];
        const auto& refs = references[s];
        cand_len += static_cast<double>(cand.size());
        std::size_t best_ref = refs.empty() ? 0 : refs[0].size();
        for (const auto& r : refs) {
            auto diff = [&](std::size_t a, std::size_t b) { return a > b ? a - b : b - a; };
            if (diff(r.size(), cand.size()) < diff(best_ref, cand.size()) ||
                (diff(r.size(), cand.size()) == diff(best_ref, cand.size()) && r.size() < best_ref))
                best_ref = r.size();
        }
        ref_len += static_cast<double>(best_ref);
        for (std::size_t n = 1; n <= 4; ++n) {
            auto cn = ngrams(cand, n);
            std::map<std::vector<std::string>, std::size_t> maxref;
            for (const auto& r : refs)
                for (const auto& [g, c] : ngrams(r, n)) maxref[g] = std::max(maxref[g], c);
            for (const auto& [g, c] : cn) {
                total[n - 1] += static_cast<double>(c);
                auto it = maxref.find(g);
                if (it != maxref.end()) matched[n - 1] += static_cast<double>(std::min(c, it->second));
            }
        }
    }
    if (cand_len == 0) return 0.0;
    double logsum = 0;
    for (std::size_t n = 0; n < 4; ++n) {
        double m = matched[n], t = total[n];
        if (n >= 1 && m == 0) { m += 1; t += 1; }
        if (m == 0 || t == 0) return 0.0;
        logsum += 0.25 * std::log(m / t);
    }
    double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
    return 100.0 * bp * std::exp(logsum);
}

struct WelchOracle {
    double t;
    double df;
};

// Direct-formula Welch's t with Welch–Satterthwaite degrees of freedom.
inline WelchOracle welch_reference(const std::vector<double>& a, const std::vector<double>& b) {
    auto mean = [](const std::vector<double>& x) {
        double s = 0;
        for (double v : x) s += v;
        return s / static_cast<double>(x.size());
    };
    auto var = [&](const std::vector<double>& x) {
        double m = mean(x), s = 0;
        for (double v : x) s += (v - m) * (v - m);
        return s / static_cast<double>(x.size() - 1);
    };
    double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double va = var(a) / na, vb = var(b) / nb;
    double t = (mean(a) - mean(b)) / std::sqrt(va + vb);
    double df = (va + vb) * (va + vb) / (va * va / (na - 1) + vb * vb / (nb - 1));
    return {t, df};
}

}  // namespace oracles
