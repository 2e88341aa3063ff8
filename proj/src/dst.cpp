#include "frfens/dst.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <set>

namespace frfens::dst {

void Frame::validate() const {
    if (events.size() < 2) throw ConfigError("frame needs at least 2 events");
    if (events.size() > 30) throw ConfigError("frame is limited to 30 events");
    std::set<std::string> uniq(events.begin(), events.end());
    if (uniq.size() != events.size()) throw ConfigError("frame events must be unique");
}

void Bba::validate() const {
    frame.validate();
    const std::uint32_t full = (1u << frame.size()) - 1u;
    double sum = 0.0;
    std::uint32_t prev = 0;
    for (std::size_t i = 0; i < masses.size(); ++i) {
        const auto& [mask, m] = masses[i];
        if (mask == 0) throw Error("belief assignment: empty set cannot carry mass");
        if (mask & ~full) throw Error("belief assignment: subset outside the frame");
        if (i > 0 && mask <= prev)
            throw Error("belief assignment: subsets must be sorted and unique");
        prev = mask;
        if (!(m >= 0.0)) throw NumericError("belief assignment: negative or NaN mass");
        sum += m;
    }
    if (std::abs(sum - 1.0) > kSumTol)
        throw NumericError("belief assignment: masses sum to " + std::to_string(sum));
}

double Bba::mass_of(std::uint32_t mask) const {
    auto it = std::lower_bound(masses.begin(), masses.end(), mask,
                               [](const auto& e, std::uint32_t k) { return e.first < k; });
    return (it != masses.end() && it->first == mask) ? it->second : 0.0;
}

int Bba::focal_count() const {
    int n = 0;
    for (const auto& [mask, m] : masses)
        if (m > 0.0) ++n;
    return n;
}

bool Bba::is_bayesian() const {
    for (const auto& [mask, m] : masses)
        if (std::popcount(mask) != 1) return false;
    return true;
}

void validate_evidence(const EvidenceSet& ev) {
    if (ev.empty()) throw Error("evidence set is empty");
    for (const auto& b : ev) {
        b.validate();
        if (!(b.frame == ev.front().frame))
            throw Error("evidence set mixes different frames");
    }
}

Bba bba_from_probs(const Frame& frame, std::span<const double> probs, double clamp_eps) {
    frame.validate();
    if (static_cast<int>(probs.size()) != frame.size())
        throw ShapeError("probability vector length does not match the frame");
    if (!(clamp_eps > 0.0 && clamp_eps < 0.5))
        throw ConfigError("clamp epsilon must lie in (0, 0.5)");

    double sum = 0.0;
    std::vector<double> p(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] >= 0.0))
            throw NumericError("probabilities must be nonnegative and finite");
        p[i] = std::clamp(probs[i], clamp_eps, 1.0 - clamp_eps);
        sum += p[i];
    }

    Bba out;
    out.frame = frame;
    out.masses.reserve(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        out.masses.emplace_back(1u << i, p[i] / sum);
    return out;
}

namespace {

std::vector<std::uint32_t> union_support(const Bba& a, const Bba& b) {
    std::vector<std::uint32_t> u;
    u.reserve(a.masses.size() + b.masses.size());
    std::size_t i = 0, j = 0;
    while (i < a.masses.size() || j < b.masses.size()) {
        if (j == b.masses.size() ||
            (i < a.masses.size() && a.masses[i].first < b.masses[j].first)) {
            u.push_back(a.masses[i++].first);
        } else if (i == a.masses.size() || b.masses[j].first < a.masses[i].first) {
            u.push_back(b.masses[j++].first);
        } else {
            u.push_back(a.masses[i].first);
            ++i, ++j;
        }
    }
    return u;
}

} // namespace

CombineResult dempster_combine(const Bba& a, const Bba& b) {
    if (!(a.frame == b.frame)) throw Error("combining assignments on different frames");

    // Walk unordered subset pairs (p <= q) of the union support and add both
    // cross products at once; every term is then symmetric in (a, b), which
    // makes the whole combination bitwise commutative.
    const std::vector<std::uint32_t> u = union_support(a, b);
    const std::size_t n = u.size();
    std::vector<double> va(n), vb(n);
    for (std::size_t i = 0; i < n; ++i) {
        va[i] = a.mass_of(u[i]);
        vb[i] = b.mass_of(u[i]);
    }

    std::vector<double> cell(1u << a.frame.size(), 0.0);
    double conflict = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double v = (i == j) ? va[i] * vb[i] : va[i] * vb[j] + va[j] * vb[i];
            const std::uint32_t inter = u[i] & u[j];
            if (inter == 0)
                conflict += v;
            else
                cell[inter] += v;
        }
    }

    if (conflict >= 1.0 - 1e-12)
        throw NumericError("total conflict: combination undefined");

    double total = 0.0;
    for (double c : cell) total += c;
    if (!(total > 0.0)) throw NumericError("total conflict: no surviving mass");

    CombineResult r;
    r.conflict = conflict;
    r.bba.frame = a.frame;
    for (std::uint32_t mask = 1; mask < cell.size(); ++mask)
        if (cell[mask] != 0.0) r.bba.masses.emplace_back(mask, cell[mask] / total);
    return r;
}

double bjs_divergence(const Bba& a, const Bba& b) {
    if (!(a.frame == b.frame)) throw Error("divergence of assignments on different frames");
    double d = 0.0;
    for (std::uint32_t mask : union_support(a, b)) {
        const double x = a.mass_of(mask);
        const double y = b.mass_of(mask);
        const double s = x + y;
        const double tx = x > 0.0 ? x * std::log(2.0 * x / s) : 0.0;
        const double ty = y > 0.0 ? y * std::log(2.0 * y / s) : 0.0;
        d += tx + ty;
    }
    return d;
}

double avg_belief_divergence(const EvidenceSet& ev, int i) {
    const int n = static_cast<int>(ev.size());
    if (n < 2) throw Error("average divergence needs at least 2 evidences");
    if (i < 0 || i >= n) throw Error("evidence index out of range");
    double sum = 0.0;
    for (int j = 0; j < n; ++j)
        if (j != i) sum += bjs_divergence(ev[static_cast<std::size_t>(i)],
                                          ev[static_cast<std::size_t>(j)]);
    return sum / static_cast<double>(n - 1);
}

double strength(const EvidenceSet& ev, int exclude) {
    const int n = static_cast<int>(ev.size());
    int included = 0;
    for (int j = 0; j < n; ++j)
        if (j != exclude) ++included;
    if (included < 2) throw Error("strength needs at least 2 included evidences");

    // Average assignment over the included members.
    std::vector<std::uint32_t> support;
    for (int j = 0; j < n; ++j) {
        if (j == exclude) continue;
        for (const auto& [mask, m] : ev[static_cast<std::size_t>(j)].masses)
            support.push_back(mask);
    }
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());

    std::vector<double> avg(support.size(), 0.0);
    for (int j = 0; j < n; ++j) {
        if (j == exclude) continue;
        for (std::size_t k = 0; k < support.size(); ++k)
            avg[k] += ev[static_cast<std::size_t>(j)].mass_of(support[k]);
    }
    const double inv = 1.0 / static_cast<double>(included);
    for (double& v : avg) v *= inv;

    int avg_focal = 0;
    for (double v : avg)
        if (v > 0.0) ++avg_focal;
    if (avg_focal == 0) throw NumericError("strength: average assignment has no mass");

    double sw = 0.0;
    for (int j = 0; j < n; ++j) {
        if (j == exclude) continue;
        const Bba& m = ev[static_cast<std::size_t>(j)];
        double dev2 = 0.0;
        for (std::size_t k = 0; k < support.size(); ++k) {
            const double d = m.mass_of(support[k]) - avg[k];
            dev2 += d * d;
        }
        const double ratio = static_cast<double>(m.focal_count()) /
                             static_cast<double>(avg_focal);
        sw += std::sqrt(ratio * dev2);
    }
    return sw * inv;
}

std::vector<double> support_degrees(const EvidenceSet& ev, double floor_eps) {
    validate_evidence(ev);
    const int n = static_cast<int>(ev.size());
    if (n < 2) throw Error("support degrees need at least 2 evidences");
    if (!(floor_eps > 0.0)) throw ConfigError("divergence floor must be positive");

    std::vector<double> sd(static_cast<std::size_t>(n));
    const double sw = strength(ev);
    for (int i = 0; i < n; ++i) {
        const double abjs = std::max(avg_belief_divergence(ev, i), floor_eps);
        // With only two evidences there is no leave-one-out strength; use the
        // neutral midpoint of the (0,1) scaling bracket.
        double bracket = 0.5;
        if (n > 2) {
            const double sw_wo = strength(ev, i);
            bracket = 0.5 + std::atan((sw - sw_wo) / 2.0) / std::numbers::pi;
        }
        sd[static_cast<std::size_t>(i)] = 1.0 / (abjs * bracket);
    }
    return sd;
}

double support_degree(const EvidenceSet& ev, int i, double floor_eps) {
    if (i < 0 || i >= static_cast<int>(ev.size()))
        throw Error("evidence index out of range");
    return support_degrees(ev, floor_eps)[static_cast<std::size_t>(i)];
}

std::vector<double> credibility_degrees(const EvidenceSet& ev,
                                        std::span<const double> sds) {
    if (ev.size() != sds.size())
        throw ShapeError("credibility: one support degree per evidence required");
    double sd_sum = 0.0;
    for (double s : sds) {
        if (!(s > 0.0)) throw NumericError("support degrees must be positive");
        sd_sum += s;
    }

    std::vector<double> cd(ev.size());
    for (std::size_t i = 0; i < ev.size(); ++i) {
        double ent = 0.0; // Deng entropy: -sum m(A) log(m(A) / (2^|A| - 1))
        for (const auto& [mask, m] : ev[i].masses) {
            if (m <= 0.0) continue;
            const double card = std::pow(2.0, std::popcount(mask)) - 1.0;
            ent -= m * std::log(m / card);
        }
        cd[i] = std::exp(ent) * (sds[i] / sd_sum);
    }
    return cd;
}

Bba weighted_average_evidence(const EvidenceSet& ev, std::span<const double> cds) {
    if (ev.size() != cds.size())
        throw ShapeError("weighted average: one credibility per evidence required");
    validate_evidence(ev);

    // Identical evidences must reproduce the shared assignment exactly, not
    // up to rounding; short-circuit that case.
    bool all_same = true;
    for (std::size_t i = 1; i < ev.size() && all_same; ++i)
        all_same = ev[i].masses == ev[0].masses;
    if (all_same) return ev[0];

    double cd_sum = 0.0;
    for (double c : cds) {
        if (!(c > 0.0)) throw NumericError("credibilities must be positive");
        cd_sum += c;
    }

    std::vector<std::uint32_t> support;
    for (const auto& b : ev)
        for (const auto& [mask, m] : b.masses) support.push_back(mask);
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());

    Bba out;
    out.frame = ev[0].frame;
    out.masses.reserve(support.size());
    for (std::uint32_t mask : support) {
        double m = 0.0;
        for (std::size_t i = 0; i < ev.size(); ++i)
            m += (cds[i] / cd_sum) * ev[i].mass_of(mask);
        out.masses.emplace_back(mask, m);
    }
    return out;
}

FusionResult improved_fuse(const EvidenceSet& ev) {
    validate_evidence(ev);
    const int n = static_cast<int>(ev.size());
    if (n < 2) throw Error("fusion needs at least 2 evidences");

    FusionResult r;
    r.diag.abjs.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        r.diag.abjs[static_cast<std::size_t>(i)] = avg_belief_divergence(ev, i);
    r.diag.sd = support_degrees(ev);
    r.diag.cd = credibility_degrees(ev, r.diag.sd);
    r.wae = weighted_average_evidence(ev, r.diag.cd);

    r.fused = r.wae;
    r.diag.conflict_trace.reserve(static_cast<std::size_t>(n - 1));
    for (int i = 1; i < n; ++i) {
        CombineResult c = dempster_combine(r.fused, r.wae);
        r.fused = std::move(c.bba);
        r.diag.conflict_trace.push_back(c.conflict);
    }
    return r;
}

Decision decide(const Bba& fused) {
    fused.validate();
    if (!fused.is_bayesian())
        throw Error("decision rule expects singleton-only assignments");
    if (fused.masses.empty()) throw Error("decision on an empty assignment");

    // Masses are mask-sorted, so classes come lowest-first.
    double best = -1.0;
    int cls = 0;
    bool tie = false;
    for (const auto& [mask, m] : fused.masses) {
        const int c = std::countr_zero(mask);
        if (m > best) {
            best = m;
            cls = c;
            tie = false;
        } else if (m == best) {
            tie = true;
        }
    }
    return {cls, tie};
}

} // namespace frfens::dst
