#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zr {

enum class Errc {
    InvalidArgument,
    GranularityTooCoarse,
    PlanTooLarge,
    ControlNotBilled,
    UnattributableDelta,
    NegativeDelta,
    ConnectFailed,
    ProtocolUnsupported,
    ProvisionFailed,
    RateLimited,
    SourceUnavailable,
    ParseFailure,
    Timeout,
    BindFailed,
    InsufficientEvidence,
    ConfigInvalid,
    IoFailure,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace zr
