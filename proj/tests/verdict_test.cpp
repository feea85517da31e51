#include <gtest/gtest.h>

#include "support/test_support.hpp"
#include "zr/error.hpp"
#include "zr/verdict.hpp"

using namespace zr;
using namespace zr::verdict;
using engine::Experiment;
using net::IpVersion;
using zr::testing::code_of;
using zr::testing::seeded_rng;

namespace {

FlowClass fc(Protocol p, IpVersion v = IpVersion::V4) { return {p, v}; }

FlowClassSet set_of(std::initializer_list<FlowClass> cs)
{
    FlowClassSet s;
    for (auto c : cs) s.insert(c);
    return s;
}

/// Evidence a correct measurement would produce for a given ground truth:
/// verify is zero-rated iff an IP or hostname rule covers the class, and
/// probes run only where verify was zero-rated.
std::vector<EvidenceCell> evidence_for(FlowClassSet tested, FlowClassSet ip_truth, FlowClassSet host_truth)
{
    std::vector<EvidenceCell> out;
    auto cell = [](Experiment e, FlowClass c, bool zero) {
        EvidenceCell ec;
        ec.experiment = e;
        ec.flow_class = c;
        ec.outcome = zero ? CellOutcome::ZeroRated : CellOutcome::Billed;
        return ec;
    };
    for (auto c : tested.members()) {
        const bool ip = ip_truth.contains(c), host = host_truth.contains(c);
        out.push_back(cell(Experiment::Verify, c, ip || host));
        if (!(ip || host)) continue;
        out.push_back(cell(Experiment::IpProbe, c, ip));
        out.push_back(cell(Experiment::HostProbe, c, host));
    }
    return out;
}

/// Set a named qualifier denotes, independent of the implementation's table.
FlowClassSet denotes(QualifierKind k)
{
    FlowClassSet s;
    for (unsigned i = 0; i < 6; ++i) {
        auto c = FlowClass::from_index(i);
        bool in = false;
        switch (k) {
        case QualifierKind::IPv4Only: in = c.ip_version == IpVersion::V4; break;
        case QualifierKind::IPv6Only: in = c.ip_version == IpVersion::V6; break;
        case QualifierKind::HTTPSOnly: in = c.protocol == Protocol::Https; break;
        case QualifierKind::HTTPOnly: in = c.protocol == Protocol::Http; break;
        case QualifierKind::HTTP3Only: in = c.protocol == Protocol::Http3; break;
        case QualifierKind::TCPOnly: in = c.protocol != Protocol::Http3; break;
        case QualifierKind::Classes: break;
        }
        if (in) s.insert(c);
    }
    return s;
}

const FlowClassSet kV4 = FlowClassSet::of_version(IpVersion::V4);

} // namespace

TEST(Verdict, IpRuleForV4OnlyGivesFootnoteA)
{
    // Snapchat at an operator with an IPv4 prefix only; both families tested.
    const auto tested = FlowClassSet::all();
    auto v = infer_verdict("op", "Snapchat", tested, evidence_for(tested, kV4, {}));
    EXPECT_EQ(v.classification, Classification::IpOnly);
    ASSERT_TRUE(v.ip_qualifier.has_value());
    EXPECT_EQ(v.ip_qualifier->kind, QualifierKind::IPv4Only);
    EXPECT_EQ(v.cell(), "IP^a");
}

TEST(Verdict, HttpsOnlyHostRuleAlongsideIpRule)
{
    auto v = infer_verdict("op", "WhatsApp", kV4, evidence_for(kV4, kV4, set_of({fc(Protocol::Https)})));
    EXPECT_EQ(v.classification, Classification::IpAndHost);
    EXPECT_FALSE(v.ip_qualifier.has_value());
    EXPECT_EQ(v.cell(), "IP, Host^b");
    EXPECT_EQ(v.qualifiers().size(), 1u);
}

TEST(Verdict, TcpOnlyIpRuleGivesFootnoteC)
{
    auto tcp = set_of({fc(Protocol::Http), fc(Protocol::Https)});
    auto v = infer_verdict("op", "WhatsApp", kV4, evidence_for(kV4, tcp, {}));
    EXPECT_EQ(v.cell(), "IP^c");
}

TEST(Verdict, MaximalAndMinimalCases)
{
    const auto all = FlowClassSet::all();
    auto both = infer_verdict("op", "app", all, evidence_for(all, all, all));
    EXPECT_EQ(both.classification, Classification::IpAndHost);
    EXPECT_EQ(both.cell(), "IP, Host");
    EXPECT_TRUE(both.qualifiers().empty());
    auto none = infer_verdict("op", "app", all, evidence_for(all, {}, {}));
    EXPECT_EQ(none.classification, Classification::FullyBilled);
    EXPECT_EQ(none.cell(), "$");
    EXPECT_EQ(none.evidence.size(), 6u);
}

TEST(Verdict, UnexplainedZeroRatingIsUnknown)
{
    std::vector<EvidenceCell> ev;
    for (auto e : engine::kAllExperiments)
        ev.push_back({e, fc(Protocol::Http), e == Experiment::Verify ? CellOutcome::ZeroRated : CellOutcome::Billed, 0, 0, ""});
    auto v = infer_verdict("op", "app", set_of({fc(Protocol::Http)}), ev);
    EXPECT_EQ(v.classification, Classification::Unknown);
    EXPECT_EQ(v.unexplained, set_of({fc(Protocol::Http)}));
    EXPECT_EQ(v.cell(), "?");
}

TEST(Verdict, MissingOrIndeterminateEvidenceIsInsufficient)
{
    auto ev = evidence_for(kV4, kV4, {});
    ev.pop_back(); // drop the last host-probe cell
    EXPECT_EQ(code_of([&] { infer_verdict("op", "app", kV4, ev); }), Errc::InsufficientEvidence);
    ev = evidence_for(kV4, {}, {});
    ev[1].outcome = CellOutcome::Indeterminate;
    EXPECT_EQ(code_of([&] { infer_verdict("op", "app", kV4, ev); }), Errc::InsufficientEvidence);
    EXPECT_EQ(code_of([&] { infer_verdict("op", "app", FlowClassSet::none(), {}); }), Errc::InsufficientEvidence);
}

TEST(Verdict, SpecialCells)
{
    EXPECT_EQ(not_available("op", "app").cell(), "×");
    EXPECT_EQ(indeterminate("op", "app", kV4, {}).cell(), "-");
}

TEST(VerdictProperty, RecoversGroundTruthRestrictedToTested)
{
    auto rng = seeded_rng(60);
    for (int i = 0; i < 5000; ++i) {
        auto tested = FlowClassSet::from_bits(static_cast<unsigned>(rng()));
        if (tested.empty()) continue;
        auto ip = FlowClassSet::from_bits(static_cast<unsigned>(rng()));
        auto host = FlowClassSet::from_bits(static_cast<unsigned>(rng()));
        auto v = infer_verdict("op", "app", tested, evidence_for(tested, ip, host));
        ASSERT_EQ(v.ip_covered, ip & tested);
        ASSERT_EQ(v.host_covered, host & tested);
        ASSERT_TRUE(v.unexplained.empty());
        const bool has_ip = !(ip & tested).empty(), has_host = !(host & tested).empty();
        const auto expected = has_ip && has_host ? Classification::IpAndHost
                              : has_ip           ? Classification::IpOnly
                              : has_host         ? Classification::HostOnly
                                                 : Classification::FullyBilled;
        ASSERT_EQ(v.classification, expected);
        ASSERT_EQ(verdict_from_json(to_json(v)), v);
    }
}

TEST(QualifierProperty, QualifierDenotesExactlyTheCoveredClasses)
{
    for (unsigned t = 1; t < 64; ++t)
        for (unsigned c = 1; c < 64; ++c) {
            if ((c & ~t) != 0) continue;
            auto tested = FlowClassSet::from_bits(t), covered = FlowClassSet::from_bits(c);
            auto q = qualify(covered, tested);
            if (covered == tested) {
                ASSERT_FALSE(q.has_value());
                continue;
            }
            ASSERT_TRUE(q.has_value());
            if (q->kind == QualifierKind::Classes) {
                ASSERT_EQ(q->classes, covered);
                // No named qualifier would have fit.
                for (auto k : {QualifierKind::IPv4Only, QualifierKind::IPv6Only, QualifierKind::HTTPSOnly,
                               QualifierKind::HTTPOnly, QualifierKind::HTTP3Only, QualifierKind::TCPOnly})
                    ASSERT_NE(denotes(k) & tested, covered);
            } else {
                ASSERT_EQ(denotes(q->kind) & tested, covered);
            }
        }
}

TEST(Qualifier, PrecedenceAndFootnotes)
{
    // Only v4 tested: "ipv4-only" would denote everything, so HTTPS is the fit.
    auto q = qualify(set_of({fc(Protocol::Https)}), kV4);
    EXPECT_EQ(q->kind, QualifierKind::HTTPSOnly);
    EXPECT_EQ(footnote(*q), "b");
    // HTTPS/v4 within {HTTPS/v4, HTTPS/v6}: version qualifiers take precedence.
    auto tested = set_of({fc(Protocol::Https), fc(Protocol::Https, IpVersion::V6)});
    EXPECT_EQ(qualify(set_of({fc(Protocol::Https)}), tested)->kind, QualifierKind::IPv4Only);
    auto odd = qualify(set_of({fc(Protocol::Http), fc(Protocol::Http3, IpVersion::V6)}), FlowClassSet::all());
    EXPECT_EQ(odd->kind, QualifierKind::Classes);
    EXPECT_EQ(footnote(*odd), "{HTTP/v4,HTTP3/v6}");
    EXPECT_EQ(footnote({QualifierKind::IPv6Only, {}}), "v6");
    EXPECT_EQ(footnote({QualifierKind::TCPOnly, {}}), "c");
}

TEST(Roaming, InferenceFromRoamingVerifyCells)
{
    EvidenceCell zr{Experiment::Verify, fc(Protocol::Https), CellOutcome::ZeroRated, 0, 0, ""};
    EvidenceCell billed = zr, unknown = zr;
    billed.outcome = CellOutcome::Billed;
    unknown.outcome = CellOutcome::Indeterminate;
    EXPECT_EQ(infer_roaming({}), RoamingZeroRating::NotTested);
    EXPECT_EQ(infer_roaming({billed, zr}), RoamingZeroRating::Yes);
    EXPECT_EQ(infer_roaming({billed, unknown}), RoamingZeroRating::No);
    EXPECT_EQ(code_of([&] { infer_roaming({unknown}); }), Errc::InsufficientEvidence);
    for (auto r : {RoamingZeroRating::Yes, RoamingZeroRating::No, RoamingZeroRating::NotOffered, RoamingZeroRating::NotTested})
        EXPECT_EQ(parse_roaming_zero_rating(to_string(r)), r);
}

TEST(VerdictJson, EvidenceRoundTrip)
{
    EvidenceCell c{Experiment::HostProbe, fc(Protocol::Http3, IpVersion::V6), CellOutcome::Billed, 0b101u, 2, "n"};
    EXPECT_EQ(evidence_from_json(to_json(c)), c);
    c.session_bitmask.reset();
    EXPECT_EQ(evidence_from_json(to_json(c)), c);
    auto na = not_available("op", "app");
    EXPECT_EQ(verdict_from_json(to_json(na)), na);
}
