// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails. Tolerances are the constants below.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "support/handshakes.hpp"
#include "support/quic_vectors.hpp"
#include "support/random.hpp"
#include "zr/billing_codec.hpp"
#include "zr/campaign.hpp"
#include "zr/crypto.hpp"
#include "zr/error.hpp"
#include "zr/forwarder.hpp"
#include "zr/hostname_extract.hpp"
#include "zr/quic_initial.hpp"
#include "zr/report.hpp"
#include "zr/sim/simulator.hpp"
#include "zr/traffic_engine.hpp"

using namespace zr;
using namespace std::chrono_literals;
using net::IpAddress;
using net::IpVersion;
using nlohmann::json;
using SteadyClock = std::chrono::steady_clock;

namespace {

// ---------------------------------------------------------------- tolerances

constexpr double kCodecBudgetSeconds = 5.0;
constexpr double kTableBudgetSeconds = 600.0;
constexpr std::size_t kTableCellMismatches = 0;
constexpr unsigned kMinRandomProfiles = 200;
constexpr unsigned kHostnameCases = 1000;
constexpr unsigned kTransparencyFetches = 1000;
constexpr double kMeteringTolerance = 0.01;
constexpr std::chrono::milliseconds kLags[] = {0ms, 5000ms, 30000ms};

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(SteadyClock::time_point t0)
{
    return std::chrono::duration<double>(SteadyClock::now() - t0).count();
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

std::string table4_dir() { return std::string(ZR_FIXTURES_DIR) + "/table4"; }

std::string read_file(const std::string& path)
{
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Table rows keyed by operator; cells split on runs of two or more spaces.
std::map<std::string, std::vector<std::string>> table_cells(const std::string& text)
{
    std::map<std::string, std::vector<std::string>> rows;
    std::istringstream in(text);
    const std::regex gap(" {2,}");
    for (std::string line; std::getline(in, line) && !line.empty();) {
        std::vector<std::string> cells;
        for (std::sregex_token_iterator it(line.begin(), line.end(), gap, -1), end; it != end; ++it) cells.push_back(*it);
        if (!cells.empty()) rows[cells.front()] = cells;
    }
    return rows;
}

// ---------------------------------------------------------------- C1

Outcome codec_round_trip()
{
    const auto t0 = SteadyClock::now();
    std::uint64_t decodes = 0, bad = 0;
    std::string first;
    for (std::uint64_t g : {1ull, 2ull, 3ull, 1000ull, 1024ull, 4096ull, 65536ull})
        for (std::uint64_t base : {2 * g, 2 * g + 1, 3 * g, 8 * g})
            for (unsigned n = 1; n <= 8; ++n) {
                const auto plan = billing::plan_session(n, base, g);
                const std::int64_t tol = g / 2 >= 1 ? static_cast<std::int64_t>(g / 2) - 1 : 0;
                for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
                    // Oracle: control payload plus the billed powers of two.
                    std::int64_t delta = static_cast<std::int64_t>(base << n);
                    for (unsigned i = 0; i < n; ++i)
                        if (mask >> i & 1) delta += static_cast<std::int64_t>(base << i);
                    for (std::int64_t eps : {-tol, std::int64_t{0}, tol}) {
                        ++decodes;
                        bool ok = true;
                        try {
                            const auto bm = billing::decode_delta(plan, delta + eps);
                            ok = bm.flags.size() == n && bm.residual == eps;
                            for (unsigned i = 0; ok && i < n; ++i) ok = bm.flags[i] == bool(mask >> i & 1);
                        } catch (const Error&) {
                            ok = false;
                        }
                        if (!ok && bad++ == 0)
                            first = fmt("g=%llu base=%llu n=%u mask=%u eps=%lld", (unsigned long long)g,
                                        (unsigned long long)base, n, mask, (long long)eps);
                    }
                }
            }
    const double secs = seconds_since(t0);
    return {bad == 0 && secs < kCodecBudgetSeconds,
            fmt("%llu decodes, %llu wrong%s%s, %.2f s (limit %.0f s)", (unsigned long long)decodes,
                (unsigned long long)bad, bad ? ", first " : "", first.c_str(), secs, kCodecBudgetSeconds)};
}

// ---------------------------------------------------------------- C2

Outcome table_reconstruction()
{
    const auto t0 = SteadyClock::now();
    auto cfg = campaign::load_config(table4_dir() + "/campaign.json");
    const auto r = campaign::run_campaign(cfg);
    const double secs = seconds_since(t0);
    const auto got = table_cells(report::render_text(r));
    const auto want = table_cells(read_file(table4_dir() + "/golden.txt"));
    std::size_t cells = 0, mismatches = 0;
    std::string first;
    for (const auto& [op, row] : want) {
        auto it = got.find(op);
        for (std::size_t i = 1; i < row.size(); ++i) {
            ++cells;
            const std::string have = it == got.end() || i >= it->second.size() ? "<missing>" : it->second[i];
            if (have != row[i] && mismatches++ == 0) first = op + "/" + want.at("Operator")[i] + ": " + have + " vs " + row[i];
        }
    }
    const bool legend = report::render_text(r).find(read_file(table4_dir() + "/golden.txt").substr(
                            read_file(table4_dir() + "/golden.txt").find("\n\n"))) != std::string::npos;
    return {mismatches <= kTableCellMismatches && legend && secs < kTableBudgetSeconds && !r.aborted(),
            fmt("%zu cells, %zu mismatched%s%s, legend %s, %.1f s (limit %.0f s)", cells, mismatches,
                mismatches ? ", first " : "", first.c_str(), legend ? "ok" : "differs", secs, kTableBudgetSeconds)};
}

// ---------------------------------------------------------------- C3

// Class index = protocol * 2 + (v6 ? 1 : 0); the named sets as bitmasks.
constexpr unsigned kAll = 0x3f, kV4 = 0x15, kV6 = 0x2a, kHttps = 0x0c, kTcp = 0x0f;

struct NamedSet {
    const char* name;
    unsigned bits;
};
constexpr NamedSet kVocabulary[] = {{"all", kAll}, {"ipv4-only", kV4}, {"https-only", kHttps}, {"tcp-only", kTcp}};

/// Rule material for one builtin endpoint.
struct AppMaterial {
    std::string hostname, v4, v6;
    std::vector<std::string> v4_prefixes, v6_prefixes, host_patterns;
    std::string decoy_v4, decoy_v6, decoy_host;
};

std::vector<AppMaterial> app_material()
{
    return {
        {"static.whatsapp.net", "192.0.2.10", "2001:db8:10::10",
         {"192.0.2.10/32", "192.0.2.0/24", "192.0.0.0/16"}, {"2001:db8:10::10/128", "2001:db8:10::/64", "2001:db8:10::/48"},
         {"static.whatsapp.net", "*.whatsapp.net"}, "192.0.2.128/25", "2001:db8:10:1::/64", "web.whatsapp.net"},
        {"app.snapchat.com", "198.51.100.20", "2001:db8:20::20",
         {"198.51.100.20/32", "198.51.100.0/24", "198.51.0.0/16"}, {"2001:db8:20::20/128", "2001:db8:20::/64", "2001:db8:20::/48"},
         {"app.snapchat.com", "*.snapchat.com"}, "198.51.100.128/25", "2001:db8:20:1::/64", "accounts.snapchat.com"},
        {"scontent.xx.fbcdn.net", "203.0.113.30", "2001:db8:30::30",
         {"203.0.113.30/32", "203.0.113.0/24", "203.0.0.0/16"}, {"2001:db8:30::30/128", "2001:db8:30::/64", "2001:db8:30::/48"},
         {"scontent.xx.fbcdn.net", "*.xx.fbcdn.net", "*.fbcdn.net"}, "203.0.113.128/25", "2001:db8:30:1::/64", "*.messenger.com"},
    };
}

struct AppTruth {
    bool in_tariff = false;
    unsigned ip_bits = 0;   // classes an IP rule zero-rates
    unsigned host_bits = 0; // classes a hostname rule zero-rates
};

struct OperatorTruth {
    std::string name;
    bool v6 = false;
    std::string roaming; // profile roaming mode
    std::vector<AppTruth> apps;
};

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v)
{
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

/// Random profile over the rule vocabulary; the returned truth is written
/// down while generating, independently of the classifier.
std::pair<json, OperatorTruth> random_profile(std::mt19937_64& rng, const std::string& name)
{
    const auto material = app_material();
    std::uniform_real_distribution<double> u(0, 1);
    auto rule_count = [&] { double x = u(rng); return x < 0.35 ? 0 : x < 0.8 ? 1 : 2; };
    auto named = [&]() -> const NamedSet& { return kVocabulary[std::uniform_int_distribution<int>(0, 3)(rng)]; };

    OperatorTruth truth;
    truth.name = name;
    truth.v6 = u(rng) < 0.4;
    truth.roaming = pick(rng, std::vector<std::string>{"not-offered", "home-routed-zero-rating-on",
                                                       "home-routed-zero-rating-off"});
    json rules = json::array();
    int next_id = 0;
    auto add = [&](const char* key, const std::string& match, const char* applies) {
        rules.push_back({{"id", "r" + std::to_string(next_id++)}, {key, match}, {"applies_to", applies}, {"pool", "p"}});
    };
    for (std::size_t a = 0; a < material.size(); ++a) {
        const auto& m = material[a];
        AppTruth t;
        t.in_tariff = u(rng) < 0.85;
        for (int k = rule_count(); k > 0; --k) {
            const auto& s = named();
            add("ip_prefix", pick(rng, m.v4_prefixes), s.name);
            t.ip_bits |= s.bits & kV4;
            if (u(rng) < 0.7) {
                add("ip_prefix", pick(rng, m.v6_prefixes), s.name);
                t.ip_bits |= s.bits & kV6;
            }
        }
        for (int k = rule_count(); k > 0; --k) {
            const auto& s = named();
            add("hostname", pick(rng, m.host_patterns), s.name);
            t.host_bits |= s.bits;
        }
        if (u(rng) < 0.3) add("ip_prefix", m.decoy_v4, "all");
        if (u(rng) < 0.3) add("ip_prefix", m.decoy_v6, "all");
        if (u(rng) < 0.3) add("hostname", m.decoy_host, "all");
        truth.apps.push_back(t);
    }
    std::shuffle(rules.begin(), rules.end(), rng);
    json profile = {{"name", name},
                    {"quota_bytes", 1ull << 34},
                    {"granularity_bytes", pick(rng, std::vector<std::uint64_t>{1, 1000, 2048})},
                    {"billing_lag_ms", 0},
                    {"roaming", truth.roaming},
                    {"rules", rules}};
    return {profile, truth};
}

verdict::Classification expected_class(const AppTruth& t, unsigned tested)
{
    using C = verdict::Classification;
    if (!t.in_tariff) return C::NotAvailable;
    const unsigned ip = t.ip_bits & tested, host = t.host_bits & tested;
    if (ip && host) return C::IpAndHost;
    if (ip) return C::IpOnly;
    if (host) return C::HostOnly;
    return C::FullyBilled;
}

verdict::RoamingZeroRating expected_roaming(const OperatorTruth& t, unsigned tested)
{
    using R = verdict::RoamingZeroRating;
    if (t.roaming == "not-offered") return R::NotOffered;
    bool any = false;
    for (const auto& a : t.apps) any = any || (a.in_tariff && ((a.ip_bits | a.host_bits) & tested));
    if (!any) return R::NotTested;
    return t.roaming == "home-routed-zero-rating-on" ? R::Yes : R::No;
}

Outcome randomized_soundness(unsigned count, unsigned parallel, std::uint64_t seed, const std::string& report_dir)
{
    const auto t0 = SteadyClock::now();
    const auto builtin = builtin_endpoints();
    const auto material = app_material();
    for (std::size_t i = 0; i < builtin.size(); ++i)
        if (builtin[i].hostname != material[i].hostname || builtin[i].addresses_v4.front().to_string() != material[i].v4 ||
            builtin[i].addresses_v6.front() != *IpAddress::parse(material[i].v6))
            return {false, "builtin endpoint " + builtin[i].application + " no longer matches the rule material"};

    campaign::CampaignConfig cfg;
    cfg.endpoints = builtin;
    cfg.control_endpoint = builtin_control_endpoint();
    cfg.base_unit = 16 * KiB;
    cfg.roaming_dwell = 0ms;
    cfg.settle_timeout = 120s;
    cfg.parallel_operators = parallel;
    std::vector<std::string> apps;
    for (const auto& e : builtin) apps.push_back(e.application);

    auto rng = zr::testing::seeded_rng(seed);
    std::vector<OperatorTruth> truths;
    for (unsigned i = 0; i < count; ++i) {
        auto [profile, truth] = random_profile(rng, fmt("R-%03u", i));
        campaign::OperatorConfig op;
        op.name = truth.name;
        op.target = campaign::SimulatorTarget{sim::profile_from_json(profile)};
        for (std::size_t a = 0; a < apps.size(); ++a)
            if (truth.apps[a].in_tariff) op.tariff.push_back(apps[a]);
        op.ip_versions = truth.v6 ? std::vector{IpVersion::V4, IpVersion::V6} : std::vector{IpVersion::V4};
        op.roaming_offered = truth.roaming != "not-offered";
        cfg.operators.push_back(std::move(op));
        truths.push_back(std::move(truth));
    }
    campaign::validate(cfg);
    const auto r = campaign::run_campaign(cfg);
    if (!report_dir.empty()) report::emit_reports(r, report_dir, {report::Format::Json, report::Format::Text});

    unsigned agree = 0;
    std::string first;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const auto& t = truths[i];
        const unsigned tested = t.v6 ? kAll : kV4;
        auto it = std::find_if(r.operators.begin(), r.operators.end(), [&](const auto& o) { return o.name == t.name; });
        std::string why;
        if (it == r.operators.end()) why = "missing";
        else if (it->aborted) why = "aborted: " + it->abort_reason;
        else if (it->roaming != expected_roaming(t, tested))
            why = fmt("roaming %s, expected %s", to_string(it->roaming).data(), to_string(expected_roaming(t, tested)).data());
        else
            for (std::size_t a = 0; a < apps.size() && why.empty(); ++a) {
                const auto& v = it->verdicts.at(a);
                const auto& at = t.apps[a];
                const auto want = expected_class(at, tested);
                if (v.classification != want)
                    why = apps[a] + fmt(": %s, expected %s", to_string(v.classification).data(), to_string(want).data());
                else if (at.in_tariff && (v.ip_covered.bits() != (at.ip_bits & tested) ||
                                          v.host_covered.bits() != (at.host_bits & tested) || !v.unexplained.empty()))
                    why = apps[a] + fmt(": covered ip=%02x host=%02x, expected ip=%02x host=%02x", v.ip_covered.bits(),
                                        v.host_covered.bits(), at.ip_bits & tested, at.host_bits & tested);
            }
        if (why.empty()) ++agree;
        else if (first.empty()) first = t.name + " " + why;
    }
    return {count >= kMinRandomProfiles && agree == count,
            fmt("%u/%u profiles agree (minimum %u profiles, 100%% required)%s%s, %.1f s", agree, count,
                kMinRandomProfiles, first.empty() ? "" : ", first ", first.c_str(), seconds_since(t0))};
}

// ---------------------------------------------------------------- C4

Outcome hostname_extraction(std::uint64_t seed)
{
    using namespace zr::testing;
    auto rng = seeded_rng(seed + 4);
    std::uniform_int_distribution<int> byte(0, 255);
    unsigned generated = 0, correct = 0, adversarial = 0, spurious = 0;
    std::string first;
    auto note = [&](const std::string& what) { if (first.empty()) first = what; };

    for (unsigned i = 0; i < kHostnameCases; ++i) {
        const auto name = random_hostname(rng);
        const std::string req = "GET /r HTTP/1.1\r\nAccept: */*\r\nhOsT: " + name + ":8080\r\n\r\n";
        const ByteVec http(req.begin(), req.end());
        const ByteVec tls = client_hello(name);
        std::vector<std::pair<Protocol, ByteVec>> flows = {{Protocol::Http, http}, {Protocol::Https, tls}};
        if (i % 4 == 0) {
            ByteVec dcid(8), scid(8);
            crypto::random_bytes(dcid);
            crypto::random_bytes(scid);
            flows.push_back({Protocol::Http3, quic::build_client_initial(dcid, scid, 0, strip_record(client_hello(name, {"h3"})))});
        }
        for (const auto& [proto, bytes] : flows) {
            ++generated;
            if (dpi::extract_hostname(proto, bytes) == name) ++correct;
            else note(name + " lost over " + std::string(to_string(proto)));

            // Truncation and mutations away from the name: the name or nothing.
            std::vector<ByteVec> variants;
            variants.emplace_back(bytes.begin(), bytes.begin() + std::uniform_int_distribution<std::size_t>(0, bytes.size())(rng));
            const auto at = std::string(as_chars(ByteView(bytes))).find(name);
            for (int k = 0; k < 3; ++k) {
                ByteVec m = bytes;
                for (int flips = 0; flips < 3; ++flips) {
                    auto pos = std::uniform_int_distribution<std::size_t>(0, m.size() - 1)(rng);
                    // The name and its framing (length fields, header delimiters) stay intact.
                    if (at != std::string::npos && pos + 16 >= at && pos < at + name.size() + 8) continue;
                    m[pos] = static_cast<std::uint8_t>(byte(rng));
                }
                variants.push_back(std::move(m));
            }
            for (const auto& v : variants) {
                ++adversarial;
                auto got = dpi::extract_hostname(proto, v);
                if (got && *got != name) {
                    ++spurious;
                    note("spurious " + *got + " for " + name);
                }
            }
        }
        ByteVec noise(std::uniform_int_distribution<std::size_t>(0, 1500)(rng));
        for (auto& b : noise) b = static_cast<std::uint8_t>(byte(rng));
        for (auto p : kAllProtocols) {
            ++adversarial;
            if (auto got = dpi::extract_hostname(p, noise)) {
                ++spurious;
                note("spurious " + *got + " from noise");
            }
        }
    }

    // Published client Initial.
    const auto secrets = quic::derive_initial_secrets(from_hex(kVectorDcid));
    bool vector_ok = to_hex(secrets.client.key) == kVectorClientKey && to_hex(secrets.client.iv) == kVectorClientIv &&
                     to_hex(secrets.client.hp) == kVectorClientHp;
    auto opened = quic::open_long_packet(from_hex(kVectorProtectedPacket), secrets.client);
    ByteVec frames = from_hex(kVectorPlainFrames);
    frames.resize(frames.size() + kVectorPaddingBytes, 0);
    vector_ok = vector_ok && opened && opened->payload == frames &&
                dpi::extract_quic_sni(ByteView(from_hex(kVectorProtectedPacket))) == "example.com";

    return {correct == generated && spurious == 0 && vector_ok,
            fmt("%u/%u generated handshakes extracted, %u spurious of %u adversarial inputs, QUIC vector %s%s%s",
                correct, generated, spurious, adversarial, vector_ok ? "matches" : "MISMATCH",
                first.empty() ? "" : ", first ", first.c_str())};
}

// ---------------------------------------------------------------- C5

Outcome transparency(unsigned fetches, std::uint64_t seed)
{
    auto rng = zr::testing::seeded_rng(seed + 5);
    sim::SimulatorConfig sc;
    sc.profile.name = "transparency";
    sc.profile.quota_bytes = 1ull << 40;
    for (int i = 0; i < 6; ++i) {
        EndpointSpec e;
        e.application = "obj" + std::to_string(i);
        e.hostname = zr::testing::random_hostname(rng) + ".test";
        e.resource_path = "/obj/" + std::to_string(i) + ".bin";
        e.addresses_v4 = {*IpAddress::parse("192.0.2." + std::to_string(100 + i))};
        e.addresses_v6 = {*IpAddress::parse("2001:db8:40::" + std::to_string(100 + i))};
        e.protocols = {std::begin(kAllProtocols), std::end(kAllProtocols)};
        e.resource_size = std::uniform_int_distribution<std::uint64_t>(1, 256 * KiB)(rng);
        sc.endpoints.push_back(e);
    }
    sim::Simulator simulator(sc);

    engine::EngineOptions direct_opts;
    direct_opts.route = transport::Route::direct();
    direct_opts.route.dial = simulator.dial_map();
    direct_opts.trust_pem = simulator.ca_pem();
    engine::TrafficEngine direct(direct_opts);

    std::vector<std::unique_ptr<fwd::Forwarder>> relays;
    for (const auto& e : sc.endpoints) {
        fwd::ForwarderSpec spec;
        spec.dial = simulator.dial_map();
        const auto origin = e.addresses_v4.front();
        spec.port_maps = {{Transport::Tcp, 0, {origin, 80}}, {Transport::Tcp, 0, {origin, 443}}, {Transport::Udp, 0, {origin, 443}}};
        relays.push_back(fwd::provision(spec, {}));
    }

    unsigned same = 0;
    std::string first;
    std::uniform_int_distribution<std::size_t> which(0, sc.endpoints.size() - 1);
    for (unsigned i = 0; i < fetches; ++i) {
        const auto k = which(rng);
        const auto& e = sc.endpoints[k];
        const Protocol p = kAllProtocols[std::uniform_int_distribution<int>(0, 2)(rng)];
        try {
            const auto a = direct.fetch_once(engine::TrafficRecipe::verify(e, p, IpVersion::V4, 1)).response;
            const auto b = direct.fetch_once(engine::TrafficRecipe::host_probe(e, p, IpVersion::V4, 1, relays[k]->address(),
                                                                                 relays[k]->port_for(transport_of(p), default_port(p))))
                               .response;
            if (a.status == 200 && b.status == 200 && a.body.size() == e.resource_size &&
                crypto::sha256(a.body) == crypto::sha256(b.body))
                ++same;
            else if (first.empty())
                first = fmt("%s over %s: status %d/%d", e.hostname.c_str(), to_string(p).data(), a.status, b.status);
        } catch (const Error& ex) {
            if (first.empty()) first = ex.what();
        }
    }

    // Gateway metering against the engine's own count.
    engine::EngineOptions gw_opts;
    gw_opts.route = simulator.route();
    gw_opts.trust_pem = simulator.ca_pem();
    engine::TrafficEngine gw(gw_opts);
    double worst = 0;
    unsigned runs = 0;
    for (auto p : kAllProtocols)
        for (auto v : kAllIpVersions)
            for (std::uint64_t target : {64 * KiB, 256 * KiB, 1 * MiB}) {
                const auto before = simulator.subscriber().meter().totals().metered;
                const auto rep = gw.run_recipe(engine::TrafficRecipe::verify(sc.endpoints[runs % 6], p, v, target));
                std::uint64_t metered = 0;
                for (int w = 0; w < 100; ++w) {
                    metered = simulator.subscriber().meter().totals().metered - before;
                    if (metered >= rep.bytes_total) break;
                    std::this_thread::sleep_for(20ms);
                }
                const double diff = std::abs(double(metered) - double(rep.bytes_total)) / double(rep.bytes_total);
                worst = std::max(worst, diff);
                ++runs;
            }
    return {same == fetches && worst <= kMeteringTolerance,
            fmt("%u/%u relay-vs-direct hashes identical%s%s; metering worst deviation %.4f%% over %u runs (limit %.0f%%)",
                same, fetches, first.empty() ? "" : ", first ", first.c_str(), worst * 100, runs, kMeteringTolerance * 100)};
}

// ---------------------------------------------------------------- C6

Outcome misclassification()
{
    auto endpoint = [](const char* app, const char* host, const char* path, const char* v4, const char* v6) {
        EndpointSpec e;
        e.application = app;
        e.hostname = host;
        e.resource_path = path;
        e.addresses_v4 = {*IpAddress::parse(v4)};
        e.addresses_v6 = {*IpAddress::parse(v6)};
        e.protocols = {std::begin(kAllProtocols), std::end(kAllProtocols)};
        return e;
    };
    campaign::CampaignConfig cfg;
    cfg.endpoints = {endpoint("Messenger", "www.messenger.com", "/favicon.ico", "203.0.113.140", "2001:db8:30:1::140"),
                     endpoint("Facebook", "scontent.xx.fbcdn.net", "/favicon.ico", "203.0.113.30", "2001:db8:30::30")};
    cfg.control_endpoint = builtin_control_endpoint();
    cfg.base_unit = 16 * KiB;
    cfg.roaming_dwell = 0ms;

    sim::OperatorProfile profile;
    profile.name = "MIS";
    profile.rules = {sim::rule_from_json({{"id", "fb-ip"}, {"ip_prefix", "203.0.113.128/25"}, {"pool", "messenger"}}),
                     sim::rule_from_json({{"id", "fb-host"}, {"hostname", "*.messenger.com"}, {"pool", "messenger"}})};
    campaign::OperatorConfig op;
    op.name = "MIS";
    op.target = campaign::SimulatorTarget{profile};
    op.tariff = {"Messenger", "Facebook"};
    cfg.operators = {op};
    campaign::validate(cfg);

    const auto r = campaign::run_campaign(cfg);
    if (r.operators.size() != 1 || r.operators[0].aborted) return {false, "campaign aborted"};
    const auto& covered = r.operators[0].verdicts.at(0);
    const auto& uncovered = r.operators[0].verdicts.at(1);
    bool verify_billed = !uncovered.evidence.empty();
    for (const auto& c : uncovered.evidence)
        verify_billed = verify_billed && c.experiment == engine::Experiment::Verify && c.outcome == verdict::CellOutcome::Billed;
    const bool pass = covered.classification == verdict::Classification::IpAndHost &&
                      uncovered.classification == verdict::Classification::FullyBilled && uncovered.cell() == "$" &&
                      verify_billed;
    return {pass, fmt("covered endpoint %s (%s), uncovered endpoint %s (%s), uncovered verify cells %s",
                      covered.cell().c_str(), to_string(covered.classification).data(), uncovered.cell().c_str(),
                      to_string(uncovered.classification).data(), verify_billed ? "all billed" : "NOT all billed")};
}

// ---------------------------------------------------------------- C7

/// Verdicts without their evidence: what the published table is made of.
json verdict_digest(const report::CampaignReport& r)
{
    json out = json::array();
    for (const auto& op : r.operators) {
        json row = {{"operator", op.name}, {"roaming", to_string(op.roaming)}, {"aborted", op.aborted}};
        for (auto v : op.verdicts) {
            v.evidence.clear();
            row["verdicts"].push_back(verdict::to_json(v));
        }
        out.push_back(row);
    }
    return out;
}

Outcome lag_robustness()
{
    const auto t0 = SteadyClock::now();
    auto base = campaign::load_config(table4_dir() + "/campaign.json");
    base.endpoints.resize(2);
    base.protocols = {Protocol::Http, Protocol::Https};
    for (auto& op : base.operators)
        std::erase_if(op.tariff, [&](const std::string& app) {
            return std::none_of(base.endpoints.begin(), base.endpoints.end(), [&](const auto& e) { return e.application == app; });
        });

    std::vector<std::future<report::CampaignReport>> runs;
    for (auto lag : kLags) {
        auto cfg = base;
        for (auto& op : cfg.operators) std::get<campaign::SimulatorTarget>(op.target).profile.billing_lag = lag;
        runs.push_back(std::async(std::launch::async, [cfg] { return campaign::run_campaign(cfg); }));
    }
    std::vector<json> digests;
    std::size_t indeterminate = 0;
    for (auto& f : runs) {
        const auto r = f.get();
        for (const auto& op : r.operators)
            for (const auto& v : op.verdicts)
                indeterminate += v.classification == verdict::Classification::Indeterminate ||
                                 v.classification == verdict::Classification::Unknown;
        digests.push_back(verdict_digest(r));
    }
    std::size_t mismatches = 0, compared = 0;
    for (std::size_t i = 1; i < digests.size(); ++i)
        for (std::size_t k = 0; k < digests[0].size(); ++k) {
            ++compared;
            mismatches += k >= digests[i].size() || digests[i][k] != digests[0][k];
        }
    return {mismatches == 0 && indeterminate == 0 && !digests[0].empty(),
            fmt("lags 0/5/30 s: %zu operator rows compared, %zu mismatches, %zu undetermined verdicts, %.1f s", compared,
                mismatches, indeterminate, seconds_since(t0))};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance criteria"};
    std::vector<int> only;
    unsigned profiles = 201, parallel = 24, fetches = kTransparencyFetches;
    std::uint64_t seed = 1;
    std::string report_dir;
    app.add_option("--only", only, "Criteria to run (1-7)")->check(CLI::Range(1, 7));
    app.add_option("--profiles", profiles, "Random profiles for criterion 3");
    app.add_option("--parallel", parallel, "Operators run concurrently for criterion 3");
    app.add_option("--fetches", fetches, "Relay-vs-direct fetches for criterion 5");
    app.add_option("--seed", seed, "Random seed");
    app.add_option("--report-dir", report_dir, "Write the criterion 3 campaign report here");
    CLI11_PARSE(app, argc, argv);

    auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"billing-codec exhaustive round-trip", codec_round_trip},
        {"table reconstruction from fixture profiles", table_reconstruction},
        {"randomized verdict soundness", [&] { return randomized_soundness(profiles, parallel, seed, report_dir); }},
        {"hostname extraction", [&] { return hostname_extraction(seed); }},
        {"relay transparency and metering", [&] { return transparency(fetches, seed); }},
        {"misclassification detection", misclassification},
        {"billing-lag robustness", lag_robustness},
    };

    auto evaluate = [](const std::function<Outcome()>& fn) {
        try {
            return fn();
        } catch (const std::exception& e) {
            return Outcome{false, std::string("exception: ") + e.what()};
        }
    };
    // The lag criterion mostly waits on the clock; it runs alongside the others.
    std::future<Outcome> lag;
    if (wanted(7)) lag = std::async(std::launch::async, evaluate, criteria[6].second);

    bool all = true;
    for (int n = 1; n <= 7; ++n) {
        if (!wanted(n)) continue;
        const Outcome o = n == 7 ? lag.get() : evaluate(criteria[n - 1].second);
        all = all && o.pass;
        std::printf("C%d %s %s: %s\n", n, o.pass ? "PASS" : "FAIL", criteria[n - 1].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
