#include <gtest/gtest.h>

#include <thread>

#include "support/test_support.hpp"
#include "zr/endpoint.hpp"
#include "zr/error.hpp"
#include "zr/sim/classifier.hpp"
#include "zr/sim/meter.hpp"
#include "zr/sim/profile.hpp"

using namespace zr;
using namespace zr::sim;
using namespace std::chrono_literals;
using net::IpAddress;
using net::IpVersion;
using zr::testing::code_of;
using zr::testing::seeded_rng;

namespace {

OperatorProfile fixture(const std::string& name)
{
    return load_profile(zr::testing::fixtures_dir() + "/table4/profiles/" + name + ".json");
}

FlowInfo flow(Protocol p, const std::string& addr, std::optional<std::string> host)
{
    auto ip = IpAddress::parse(addr).value();
    return {FlowClass{p, ip.version()}, ip, std::move(host)};
}

bool zero_rated(const OperatorProfile& prof, SessionKind s, const FlowInfo& f) { return !classify_flow(prof, s, f).billed(); }

// ---------------------------------------------------------------- independent oracle

bool oracle_prefix(const std::string& prefix, const IpAddress& a)
{
    auto slash = prefix.find('/');
    auto net = IpAddress::parse(prefix.substr(0, slash)).value();
    unsigned len = slash == std::string::npos ? (net.is_v6() ? 128 : 32) : std::stoul(prefix.substr(slash + 1));
    if (net.is_v6() != a.is_v6()) return false;
    auto x = net.bytes(), y = a.bytes();
    for (unsigned bit = 0; bit < len; ++bit) {
        const unsigned byte = bit / 8, shift = 7 - bit % 8;
        if (((x[byte] >> shift) & 1) != ((y[byte] >> shift) & 1)) return false;
    }
    return true;
}

bool oracle_host(const std::string& pattern, const std::string& host)
{
    if (pattern.rfind("*.", 0) != 0) return pattern == host;
    const std::string tail = pattern.substr(1); // ".example.org"
    return host.size() > tail.size() && host.compare(host.size() - tail.size(), tail.size(), tail) == 0;
}

struct OracleRule {
    std::string prefix, host; // exactly one set
    unsigned classes;
    std::string pool;
};

std::optional<std::string> oracle_pool(const std::vector<OracleRule>& rules, RoamingMode roaming, SessionKind s,
                                       const FlowInfo& f)
{
    if (s == SessionKind::Roaming && roaming != RoamingMode::HomeRoutedZeroRatingOn) return std::nullopt;
    for (const auto& r : rules) {
        if (!(r.classes >> f.flow_class.index() & 1)) continue;
        bool hit = !r.prefix.empty() ? oracle_prefix(r.prefix, f.destination)
                                     : (f.hostname && oracle_host(r.host, *f.hostname));
        if (hit) return r.pool;
    }
    return std::nullopt;
}

struct RandomWorld {
    std::vector<OracleRule> rules;
    OperatorProfile profile;
};

const char* const kHosts[] = {"a.example.org", "b.a.example.org", "example.org", "cdn.test", "x.cdn.test", "other.test"};
const char* const kPrefixes4[] = {"192.0.2.0/24", "192.0.2.128/25", "198.51.100.0/24", "10.0.0.0/8", "192.0.2.7"};
const char* const kPrefixes6[] = {"2001:db8::/32", "2001:db8:10::/48", "2001:db8:10:8000::/49", "2001:db8:20::1"};
const char* const kAddrs[] = {"192.0.2.7",   "192.0.2.200",   "198.51.100.9",      "10.1.2.3",         "203.0.113.5",
                              "2001:db8::1", "2001:db8:10::5", "2001:db8:10:8000::9", "2001:db8:20::1", "2001:db9::1"};

RandomWorld random_world(std::mt19937_64& rng)
{
    RandomWorld w;
    std::uniform_int_distribution<int> count(0, 6), coin(0, 1), mode(0, 2);
    std::uniform_int_distribution<unsigned> classes(0, 63);
    w.profile.name = "rand";
    w.profile.roaming = static_cast<RoamingMode>(mode(rng));
    for (int i = count(rng); i > 0; --i) {
        OracleRule r;
        r.classes = classes(rng);
        r.pool = "p" + std::to_string(w.rules.size());
        if (coin(rng)) {
            r.host = std::string(coin(rng) ? "*." : "") + kHosts[rng() % std::size(kHosts)];
        } else {
            r.prefix = coin(rng) ? kPrefixes4[rng() % std::size(kPrefixes4)] : kPrefixes6[rng() % std::size(kPrefixes6)];
        }
        ClassificationRule cr;
        cr.id = r.pool;
        cr.pool = r.pool;
        cr.applies_to = FlowClassSet::from_bits(r.classes);
        if (!r.prefix.empty()) cr.match = net::IpPrefix::parse(r.prefix).value();
        else cr.match = HostnamePattern::parse(r.host).value();
        w.rules.push_back(r);
        w.profile.rules.push_back(cr);
    }
    return w;
}

FlowInfo random_flow(std::mt19937_64& rng)
{
    auto ip = IpAddress::parse(kAddrs[rng() % std::size(kAddrs)]).value();
    FlowInfo f{FlowClass{kAllProtocols[rng() % 3], ip.version()}, ip, std::nullopt};
    if (rng() % 4) f.hostname = kHosts[rng() % std::size(kHosts)];
    return f;
}

} // namespace

// ---------------------------------------------------------------- profiles

TEST(Profile, JsonRoundTrip)
{
    for (auto name : {"at-1", "at-2", "hr-2", "ro-1", "ro-2"}) {
        auto p = fixture(name);
        EXPECT_EQ(profile_from_json(to_json(p)), p) << name;
    }
}

TEST(Profile, SchemaViolationsAreConfigInvalid)
{
    auto base = to_json(fixture("at-1"));
    auto bad = [&](auto mutate) {
        auto j = base;
        mutate(j);
        return code_of([&] { profile_from_json(j); });
    };
    EXPECT_EQ(bad([](auto& j) { j["rules"][0]["ip_prefix"] = "300.0.0.0/8"; }), Errc::ConfigInvalid);
    EXPECT_EQ(bad([](auto& j) { j["rules"][0]["applies_to"] = "sometimes"; }), Errc::ConfigInvalid);
    EXPECT_EQ(bad([](auto& j) { j["roaming"] = "maybe"; }), Errc::ConfigInvalid);
    EXPECT_EQ(bad([](auto& j) { j["rules"][1]["id"] = j["rules"][0]["id"]; }), Errc::ConfigInvalid);
    EXPECT_EQ(bad([](auto& j) { j.erase("name"); }), Errc::ConfigInvalid);
}

TEST(HostnamePattern, SuffixMatchesStrictSubdomainsOnly)
{
    auto p = HostnamePattern::parse("*.snapchat.com").value();
    EXPECT_TRUE(p.matches("app.snapchat.com"));
    EXPECT_TRUE(p.matches("a.b.snapchat.com"));
    EXPECT_FALSE(p.matches("snapchat.com"));
    EXPECT_FALSE(p.matches("evilsnapchat.com"));
    auto exact = HostnamePattern::parse("app.snapchat.com").value();
    EXPECT_FALSE(exact.matches("x.app.snapchat.com"));
    EXPECT_FALSE(HostnamePattern::parse("*.").has_value());
}

// ---------------------------------------------------------------- classifier

TEST(Classifier, At2SnapchatV6IsBilled)
{
    auto p = fixture("at-2");
    EXPECT_TRUE(zero_rated(p, SessionKind::Domestic, flow(Protocol::Https, "198.51.100.20", "x.test")));
    EXPECT_FALSE(zero_rated(p, SessionKind::Domestic, flow(Protocol::Https, "2001:db8:20::20", "app.snapchat.com")));
}

TEST(Classifier, HostRuleFollowsHostnameNotAddress)
{
    auto p = fixture("hr-1");
    EXPECT_TRUE(zero_rated(p, SessionKind::Domestic, flow(Protocol::Http3, "198.18.0.200", "app.snapchat.com")));
    EXPECT_FALSE(zero_rated(p, SessionKind::Domestic, flow(Protocol::Https, "198.51.100.20", "control.zr-audit.test")));
    EXPECT_FALSE(zero_rated(p, SessionKind::Domestic, flow(Protocol::Https, "198.51.100.20", std::nullopt)));
}

TEST(Classifier, HttpsOnlyHostRule)
{
    auto p = fixture("hr-2");
    const std::string dummy_ip = "198.18.0.200";
    EXPECT_TRUE(zero_rated(p, SessionKind::Domestic, flow(Protocol::Https, dummy_ip, "app.snapchat.com")));
    EXPECT_FALSE(zero_rated(p, SessionKind::Domestic, flow(Protocol::Http, dummy_ip, "app.snapchat.com")));
    EXPECT_FALSE(zero_rated(p, SessionKind::Domestic, flow(Protocol::Http3, dummy_ip, "app.snapchat.com")));
}

TEST(Classifier, TcpOnlyIpRuleBillsHttp3)
{
    auto p = fixture("ro-2");
    EXPECT_TRUE(zero_rated(p, SessionKind::Domestic, flow(Protocol::Http, "192.0.2.10", std::nullopt)));
    EXPECT_TRUE(zero_rated(p, SessionKind::Domestic, flow(Protocol::Https, "192.0.2.10", std::nullopt)));
    EXPECT_FALSE(zero_rated(p, SessionKind::Domestic, flow(Protocol::Http3, "192.0.2.10", std::nullopt)));
}

TEST(Classifier, RoamingModes)
{
    const auto f = flow(Protocol::Https, "192.0.2.10", "static.whatsapp.net");
    EXPECT_TRUE(zero_rated(fixture("at-1"), SessionKind::Roaming, f));
    EXPECT_FALSE(zero_rated(fixture("hr-1"), SessionKind::Roaming, f));
    EXPECT_FALSE(zero_rated(fixture("ro-2"), SessionKind::Roaming, f));
    EXPECT_TRUE(zero_rated(fixture("hr-1"), SessionKind::Domestic, f));
}

TEST(Classifier, FirstMatchingRuleWins)
{
    auto p = fixture("at-1");
    auto c = classify_flow(p, SessionKind::Domestic, flow(Protocol::Https, "198.51.100.20", "app.snapchat.com"));
    EXPECT_EQ(c.rule_id, "sc-ip4");
    EXPECT_EQ(c.pool, "snapchat");
}

TEST(ClassifierProperty, AgreesWithIndependentEvaluator)
{
    auto rng = seeded_rng(10);
    for (int world = 0; world < 400; ++world) {
        auto w = random_world(rng);
        for (int i = 0; i < 60; ++i) {
            auto f = random_flow(rng);
            for (auto s : {SessionKind::Domestic, SessionKind::Roaming})
                ASSERT_EQ(classify_flow(w.profile, s, f).pool, oracle_pool(w.rules, w.profile.roaming, s, f));
        }
    }
}

TEST(ClassifierProperty, AppendingARuleNeverBillsAZeroRatedFlow)
{
    auto rng = seeded_rng(11);
    for (int world = 0; world < 300; ++world) {
        auto w = random_world(rng);
        auto extra = random_world(rng);
        if (extra.profile.rules.empty()) continue;
        auto bigger = w.profile;
        auto rule = extra.profile.rules.front();
        rule.id = "extra";
        bigger.rules.push_back(rule);
        for (int i = 0; i < 40; ++i) {
            auto f = random_flow(rng);
            if (!zero_rated(w.profile, SessionKind::Domestic, f)) continue;
            ASSERT_TRUE(zero_rated(bigger, SessionKind::Domestic, f));
        }
    }
}

TEST(ClassifierProperty, RoamingNeverZeroRatesMoreThanDomestic)
{
    auto rng = seeded_rng(12);
    for (int world = 0; world < 300; ++world) {
        auto w = random_world(rng);
        for (int i = 0; i < 40; ++i) {
            auto f = random_flow(rng);
            const bool roaming = zero_rated(w.profile, SessionKind::Roaming, f);
            ASSERT_TRUE(!roaming || zero_rated(w.profile, SessionKind::Domestic, f));
            ASSERT_TRUE(!roaming || w.profile.roaming == RoamingMode::HomeRoutedZeroRatingOn);
        }
    }
}

TEST(Classifier, BuiltinControlEndpointIsUnmatchedByFixtures)
{
    auto control = builtin_control_endpoint();
    for (auto name : {"at-1", "at-2", "at-3", "hr-1", "hr-2", "ro-1", "ro-2"}) {
        auto p = fixture(name);
        for (auto proto : kAllProtocols)
            for (const auto& a : control.addresses_v4)
                EXPECT_FALSE(zero_rated(p, SessionKind::Domestic, FlowInfo{{proto, IpVersion::V4}, a, control.hostname}))
                    << name;
    }
}

// ---------------------------------------------------------------- inspector

TEST(FlowInspector, DetectsProtocolAndHostname)
{
    FlowInspector http(Transport::Tcp, IpVersion::V4);
    http.client_bytes(as_bytes("GET / HTTP/1.1\r\nHo"));
    EXPECT_FALSE(http.done());
    http.client_bytes(as_bytes("st: cdn.test\r\n\r\n"));
    EXPECT_TRUE(http.done());
    EXPECT_EQ(http.hostname(), "cdn.test");
    EXPECT_EQ(http.protocol(), Protocol::Http);

    FlowInspector tls(Transport::Tcp, IpVersion::V6);
    const std::uint8_t rec[] = {0x16, 0x03, 0x01};
    tls.client_bytes(rec);
    EXPECT_EQ(tls.flow_class(), (FlowClass{Protocol::Https, IpVersion::V6}));
}

TEST(FlowInspector, GivesUpAfterInspectionLimit)
{
    FlowInspector in(Transport::Tcp, IpVersion::V4);
    std::string junk(FlowInspector::kInspectLimit - 1, 'x');
    in.client_bytes(as_bytes(junk));
    EXPECT_FALSE(in.done());
    in.client_bytes(as_bytes("GET / HTTP/1.1\r\nHost: late.test\r\n\r\n"));
    EXPECT_TRUE(in.done());
    EXPECT_FALSE(in.hostname().has_value());
}

// ---------------------------------------------------------------- meter

namespace {

struct ManualTime {
    Meter::Clock::time_point t = Meter::Clock::time_point{} + 1000h;
    Meter::Now fn()
    {
        return [this] { return t; };
    }
};

std::uint64_t open_classified(Meter& m, bool billed)
{
    auto id = m.open_flow({});
    Classification c;
    if (!billed) {
        c.rule_id = "r";
        c.pool = "pool";
    }
    m.classify(id, FlowInfo{}, c, SessionKind::Domestic);
    return id;
}

} // namespace

TEST(Meter, ConservationAcrossPools)
{
    ManualTime clock;
    Meter m(1'000'000, 1, 0ms, clock.fn());
    auto rng = seeded_rng(20);
    std::uint64_t billed = 0, zero = 0;
    for (int i = 0; i < 200; ++i) {
        bool b = rng() % 2;
        auto id = open_classified(m, b);
        std::uint64_t n = rng() % 20000;
        m.charge(id, n, rng() % 2);
        (b ? billed : zero) += n;
    }
    auto t = m.totals();
    EXPECT_EQ(t.metered, billed + zero);
    EXPECT_EQ(t.billed + t.overdraft, billed);
    EXPECT_EQ(t.pools["pool"], zero);
    EXPECT_EQ(m.true_remaining(), billed >= 1'000'000 ? 0 : 1'000'000 - billed);
}

TEST(Meter, LagDelaysVisibility)
{
    ManualTime clock;
    Meter m(1'000'000, 1, 5000ms, clock.fn());
    auto id = open_classified(m, true);
    m.charge(id, 1000, true);
    EXPECT_EQ(m.true_remaining(), 999'000u);
    EXPECT_EQ(m.visible_remaining(), 1'000'000u);
    clock.t += 4999ms;
    EXPECT_EQ(m.visible_remaining(), 1'000'000u);
    clock.t += 1ms;
    EXPECT_EQ(m.visible_remaining(), 999'000u);
}

TEST(Meter, VisibleRemainingIsFlooredToGranularity)
{
    ManualTime clock;
    Meter m(1'000'000, 300'000, 0ms, clock.fn());
    EXPECT_EQ(m.visible_remaining(), 900'000u);
    auto id = open_classified(m, true);
    m.charge(id, 100'001, false);
    EXPECT_EQ(m.visible_remaining(), 600'000u);
}

TEST(Meter, OverdraftPastQuota)
{
    ManualTime clock;
    Meter m(1000, 1, 0ms, clock.fn());
    auto id = open_classified(m, true);
    m.charge(id, 700, true);
    m.charge(id, 700, false);
    auto t = m.totals();
    EXPECT_EQ(t.billed, 1000u);
    EXPECT_EQ(t.overdraft, 400u);
    EXPECT_EQ(m.visible_remaining(), 0u);
}

TEST(Meter, DirectionFilter)
{
    ManualTime clock;
    Meter m(1000, 1, 0ms, clock.fn());
    m.set_meter_directions(false, true);
    auto id = open_classified(m, true);
    m.charge(id, 100, true);
    m.charge(id, 50, false);
    EXPECT_EQ(m.true_remaining(), 950u);
    auto flows = m.flows();
    ASSERT_EQ(flows.size(), 1u);
    EXPECT_EQ(flows[0].bytes_up, 100u);
    EXPECT_EQ(flows[0].bytes_metered, 50u);
}

TEST(MeterProperty, VisibleNeverBelowTrueAndConvergesAfterLag)
{
    auto rng = seeded_rng(21);
    for (int round = 0; round < 50; ++round) {
        ManualTime clock;
        const auto lag = std::chrono::milliseconds(rng() % 3000);
        const std::uint64_t g = 1 + rng() % 5000;
        Meter m(10'000'000, g, lag, clock.fn());
        auto id = open_classified(m, true);
        for (int i = 0; i < 30; ++i) {
            m.charge(id, rng() % 10000, true);
            clock.t += std::chrono::milliseconds(rng() % 500);
            ASSERT_GE(m.visible_remaining(), m.true_remaining() - m.true_remaining() % g);
        }
        clock.t += lag;
        ASSERT_EQ(m.visible_remaining(), m.true_remaining() - m.true_remaining() % g);
    }
}
