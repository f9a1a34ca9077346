#pragma once

#include <cassert>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace mez {

enum class Errc {
    invalid_argument,
    rejected_stale,
    not_found,
    invalid_range,
    frame_too_large,
    io_error,
    corrupt,
    parse_error,
    empty_profile,
    degenerate_points,
    below_intercept,
    unknown_accuracy,
    upscale_requested,
    unsupported_conversion,
    kernel_too_large,
    shape_mismatch,
    non_monotonic_schedule,
    empty_samples,
    zero_baseline,
    auth_failed,
    broker_unavailable,
    duplicate_camera,
    unknown_camera,
    unknown_subscription,
    timeout,
    gave_up,
    protocol_error,
};

std::string_view errc_name(Errc code);

struct Error {
    Errc code;
    std::string message;

    std::string to_string() const;
};

inline Error make_error(Errc code, std::string message = {})
{
    return Error{code, std::move(message)};
}

// Value-or-error. Accessing the wrong alternative is a programming error.
template <typename T>
class [[nodiscard]] Result {
public:
    Result(T value) : v_(std::move(value)) {}
    Result(Error error) : v_(std::move(error)) {}

    bool ok() const { return v_.index() == 0; }
    explicit operator bool() const { return ok(); }

    T& value() &
    {
        assert(ok());
        return std::get<0>(v_);
    }
    const T& value() const&
    {
        assert(ok());
        return std::get<0>(v_);
    }
    T&& value() &&
    {
        assert(ok());
        return std::get<0>(std::move(v_));
    }

    const Error& error() const
    {
        assert(!ok());
        return std::get<1>(v_);
    }
    Errc code() const { return error().code; }

    T* operator->() { return &value(); }
    const T* operator->() const { return &value(); }
    T& operator*() & { return value(); }
    const T& operator*() const& { return value(); }

private:
    std::variant<T, Error> v_;
};

class [[nodiscard]] Status {
public:
    Status() = default;
    Status(Error error) : error_(std::move(error)) {}

    static Status ok_status() { return {}; }

    bool ok() const { return !error_.has_value(); }
    explicit operator bool() const { return ok(); }
    const Error& error() const
    {
        assert(!ok());
        return *error_;
    }
    Errc code() const { return error().code; }

private:
    std::optional<Error> error_;
};

}  // namespace mez
