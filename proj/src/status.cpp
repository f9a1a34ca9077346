#include "mez/status.hpp"

namespace mez {

std::string_view errc_name(Errc code)
{
    switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::rejected_stale: return "rejected_stale";
    case Errc::not_found: return "not_found";
    case Errc::invalid_range: return "invalid_range";
    case Errc::frame_too_large: return "frame_too_large";
    case Errc::io_error: return "io_error";
    case Errc::corrupt: return "corrupt";
    case Errc::parse_error: return "parse_error";
    case Errc::empty_profile: return "empty_profile";
    case Errc::degenerate_points: return "degenerate_points";
    case Errc::below_intercept: return "below_intercept";
    case Errc::unknown_accuracy: return "unknown_accuracy";
    case Errc::upscale_requested: return "upscale_requested";
    case Errc::unsupported_conversion: return "unsupported_conversion";
    case Errc::kernel_too_large: return "kernel_too_large";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::non_monotonic_schedule: return "non_monotonic_schedule";
    case Errc::empty_samples: return "empty_samples";
    case Errc::zero_baseline: return "zero_baseline";
    case Errc::auth_failed: return "auth_failed";
    case Errc::broker_unavailable: return "broker_unavailable";
    case Errc::duplicate_camera: return "duplicate_camera";
    case Errc::unknown_camera: return "unknown_camera";
    case Errc::unknown_subscription: return "unknown_subscription";
    case Errc::timeout: return "timeout";
    case Errc::gave_up: return "gave_up";
    case Errc::protocol_error: return "protocol_error";
    }
    return "unknown";
}

std::string Error::to_string() const
{
    std::string out(errc_name(code));
    if (!message.empty()) {
        out += ": ";
        out += message;
    }
    return out;
}

}  // namespace mez
