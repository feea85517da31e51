#pragma once

// Classification verdicts inferred from per-cell billing evidence.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "zr/protocol.hpp"
#include "zr/traffic_engine.hpp"

namespace zr::verdict {

enum class CellOutcome { ZeroRated, Billed, Indeterminate };

std::string_view to_string(CellOutcome o) noexcept;

struct EvidenceCell {
    engine::Experiment experiment = engine::Experiment::Verify;
    FlowClass flow_class;
    CellOutcome outcome = CellOutcome::Indeterminate;
    /// Decoded session bitmask (bit i set: payload i billed); absent when the
    /// session could not be decoded.
    std::optional<std::uint32_t> session_bitmask;
    unsigned payload_index = 0;
    std::string note;

    bool operator==(const EvidenceCell&) const = default;
};

/// Unknown: zero-rated on verify, neither probe explains it.
/// Indeterminate: billing evidence could not be attributed.
enum class Classification { IpOnly, HostOnly, IpAndHost, FullyBilled, NotAvailable, Unknown, Indeterminate };

std::string_view to_string(Classification c) noexcept;
std::optional<Classification> parse_classification(std::string_view s) noexcept;

enum class QualifierKind { IPv4Only, IPv6Only, HTTPSOnly, HTTPOnly, HTTP3Only, TCPOnly, Classes };

/// Restriction of a mechanism relative to the flow classes that were tested.
struct Qualifier {
    QualifierKind kind = QualifierKind::Classes;
    /// Covered classes; only meaningful for Classes.
    FlowClassSet classes;

    bool operator==(const Qualifier&) const = default;
};

std::string_view to_string(QualifierKind k) noexcept;

/// Qualifier for `covered` within `tested`; nullopt when covered == tested.
/// Precondition: covered is a non-empty subset of tested.
std::optional<Qualifier> qualify(FlowClassSet covered, FlowClassSet tested);

/// Footnote letter in the rendered table: a, b, c or an explicit class list.
std::string footnote(const Qualifier& q);

enum class RoamingZeroRating { Yes, No, NotOffered, NotTested };

std::string_view to_string(RoamingZeroRating r) noexcept;
std::optional<RoamingZeroRating> parse_roaming_zero_rating(std::string_view s) noexcept;

struct Verdict {
    std::string operator_name;
    std::string application;
    Classification classification = Classification::NotAvailable;
    /// Classes whose verify payload was sent.
    FlowClassSet tested;
    /// Classes zero-rated by an IP rule (ip-probe zero-rated).
    FlowClassSet ip_covered;
    /// Classes zero-rated by a hostname rule (host-probe zero-rated).
    FlowClassSet host_covered;
    /// Zero-rated on verify but on neither probe.
    FlowClassSet unexplained;
    std::optional<Qualifier> ip_qualifier;
    std::optional<Qualifier> host_qualifier;
    std::vector<EvidenceCell> evidence;

    /// Union of the per-mechanism qualifiers.
    std::vector<Qualifier> qualifiers() const;
    /// Table cell text: "IP", "IP, Host^b", "$", "×", "?", "-".
    std::string cell() const;

    bool operator==(const Verdict&) const = default;
};

/// Applies the probe logic per flow class.
///
/// pre: every class in `tested` has a verify cell; classes whose verify was
/// zero-rated have both probe cells. Throws Error{InsufficientEvidence} when a
/// required cell is missing or Indeterminate.
Verdict infer_verdict(const std::string& operator_name, const std::string& application, FlowClassSet tested,
                      const std::vector<EvidenceCell>& evidence);

/// Verdict for an application outside the operator's zero-rating tariff.
Verdict not_available(const std::string& operator_name, const std::string& application);

/// Verdict whose evidence could not be attributed.
Verdict indeterminate(const std::string& operator_name, const std::string& application, FlowClassSet tested,
                      const std::vector<EvidenceCell>& evidence);

/// Roaming flag from verify cells of a roaming session.
RoamingZeroRating infer_roaming(const std::vector<EvidenceCell>& roaming_verify);

nlohmann::json to_json(const EvidenceCell& c);
EvidenceCell evidence_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j);

} // namespace zr::verdict
