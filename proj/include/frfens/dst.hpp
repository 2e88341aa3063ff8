#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "frfens/errors.hpp"

// Belief-function algebra on a small frame of discernment plus the
// divergence-weighted fusion rule used to merge classifier outputs.
namespace frfens::dst {

// Frame of discernment: an ordered set of mutually exclusive event names.
// Subsets are encoded as bitmasks over the event indices, which caps the
// frame at 30 events (far above the two classes used here).
struct Frame {
    std::vector<std::string> events;

    int size() const { return static_cast<int>(events.size()); }
    void validate() const;
    bool operator==(const Frame&) const = default;
};

// Basic belief assignment. Masses are stored sparsely as (subset bitmask,
// mass) pairs sorted by mask; the empty set never carries mass.
struct Bba {
    Frame frame;
    std::vector<std::pair<std::uint32_t, double>> masses;

    static constexpr double kSumTol = 1e-9;

    void validate() const;
    double mass_of(std::uint32_t mask) const; // 0 when the subset is absent
    int focal_count() const;                  // subsets with mass > 0
    bool is_bayesian() const;                 // singletons only
};

using EvidenceSet = std::vector<Bba>;

void validate_evidence(const EvidenceSet& ev);

// Clamps each probability to [clamp_eps, 1-clamp_eps], renormalizes, and
// assigns the result to the singleton subsets of `frame`.
Bba bba_from_probs(const Frame& frame, std::span<const double> probs,
                   double clamp_eps = 1e-6);

struct CombineResult {
    Bba bba;
    double conflict; // mass assigned to contradictory intersections
};

// Dempster's rule. Throws NumericError when the evidences are in total
// conflict (conflict >= 1 - 1e-12). Exactly commutative: the pair products
// are accumulated symmetrically so combine(a,b) == combine(b,a) bitwise.
CombineResult dempster_combine(const Bba& a, const Bba& b);

// Belief Jensen-Shannon divergence between two assignments on one frame:
// sum over subsets of m_a log(2 m_a/(m_a+m_b)) + m_b log(2 m_b/(m_a+m_b)),
// natural log, 0 log 0 := 0. Symmetric, >= 0, zero only for equal inputs.
double bjs_divergence(const Bba& a, const Bba& b);

// Mean BJS divergence between evidence i and every other evidence.
double avg_belief_divergence(const EvidenceSet& ev, int i);

// Dispersion of the evidence set around its average assignment:
// mean over members of sqrt((|m_j|/|mbar|) * ||m_j - mbar||^2) where |.|
// counts mass-bearing subsets. Pass `exclude` >= 0 for the leave-one-out
// variant (at least two members must remain).
double strength(const EvidenceSet& ev, int exclude = -1);

// Support degree of each evidence: the inverse of its average divergence
// (floored at floor_eps) scaled by 0.5 + atan((SW - SW_minus_i)/2)/pi,
// so outliers - divergent and strength-inflating - get small support.
// With exactly two evidences the leave-one-out strength is undefined and
// the scaling factor is fixed at its neutral value 0.5.
std::vector<double> support_degrees(const EvidenceSet& ev, double floor_eps = 1e-12);
double support_degree(const EvidenceSet& ev, int i, double floor_eps = 1e-12);

// Credibility of each evidence: its Deng-entropy exponential
// exp(-sum m(A) log(m(A)/(2^|A|-1))) times its normalized support degree.
std::vector<double> credibility_degrees(const EvidenceSet& ev,
                                        std::span<const double> sds);

// Convex combination of the evidences with normalized credibility weights.
// An all-identical evidence set returns the common assignment unchanged.
Bba weighted_average_evidence(const EvidenceSet& ev, std::span<const double> cds);

struct FusionDiagnostics {
    std::vector<double> abjs;           // average divergence per evidence
    std::vector<double> sd;             // support degree per evidence
    std::vector<double> cd;             // credibility per evidence
    std::vector<double> conflict_trace; // conflict of each self-combination
};

struct FusionResult {
    Bba fused;
    Bba wae; // weighted average evidence before self-combination
    FusionDiagnostics diag;
};

// Full conflict-robust fusion: support degrees -> credibilities -> weighted
// average evidence, then N-1 Dempster self-combinations of that average
// (N = evidence count).
FusionResult improved_fuse(const EvidenceSet& ev);

struct Decision {
    int cls;
    bool tie; // exact mass tie at the maximum, resolved to the lowest class
};

// Argmax singleton mass of a Bayesian assignment.
Decision decide(const Bba& fused);

} // namespace frfens::dst
