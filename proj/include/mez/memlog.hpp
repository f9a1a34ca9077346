#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <thread>
#include <vector>

#include "mez/frame.hpp"
#include "mez/segment_file.hpp"

namespace mez {

struct LogConfig {
    std::size_t capacity_bytes = std::size_t{1} << 30;
    int segment_count = 16;
    std::optional<std::filesystem::path> persist_dir;
    bool encrypt_at_rest = false;
    // Required when encrypt_at_rest is on.
    std::optional<EncryptionKey> key;
};

enum class AppendOutcome { appended, rejected_stale };

struct RangeResult {
    std::vector<FramePtr> frames;
    bool truncated_start = false;
};

struct RecoveryReport {
    int loaded = 0;
    int discarded = 0;  // crc mismatch, truncation, undecodable
    int overlapping = 0;
    int excess = 0;  // valid but older than what the ring can hold
};

struct SegmentInfo {
    std::uint64_t seq = 0;
    Timestamp first;
    Timestamp last;
    std::size_t count = 0;
    std::size_t bytes = 0;
    bool sealed = false;
    std::optional<std::uint32_t> crc32;
};

/// Append-only circular log of frames split into fixed-budget segments.
/// One writer, any number of readers.
class MemLog {
public:
    static Result<std::unique_ptr<MemLog>> create(LogConfig config);
    static Result<std::unique_ptr<MemLog>> recover(LogConfig config, RecoveryReport* report = nullptr);

    ~MemLog();
    MemLog(const MemLog&) = delete;
    MemLog& operator=(const MemLog&) = delete;

    /// Errc::frame_too_large when the frame exceeds one segment budget.
    Result<AppendOutcome> append(FramePtr f);
    Result<AppendOutcome> append(Frame f) { return append(std::make_shared<const Frame>(std::move(f))); }

    Result<FramePtr> get(Timestamp ts) const;
    Result<RangeResult> get_range(Timestamp start, Timestamp end) const;

    /// Seals the active segment (if non-empty) and waits for pending disk writes.
    void flush();
    void wait_persisted();

    /// Blocks until an entry newer than `after` exists, or the timeout passes.
    bool wait_newer(Timestamp after, std::chrono::milliseconds timeout) const;

    std::optional<Timestamp> first_ts() const;
    std::optional<Timestamp> last_ts() const;
    std::size_t size() const;
    std::size_t resident_bytes() const;
    std::size_t segment_budget() const { return budget_; }
    std::vector<SegmentInfo> segments() const;
    std::vector<std::filesystem::path> persisted_files() const;
    std::uint64_t persist_errors() const { return persist_errors_.load(); }

private:
    struct Segment {
        mutable std::shared_mutex mu;
        std::vector<FramePtr> entries;
        std::size_t bytes = 0;
        bool sealed = false;
        std::optional<std::uint32_t> crc32;
        std::optional<std::filesystem::path> file;
        // Metadata readable without the segment lock; guarded by ring_mu_.
        std::uint64_t seq = 0;
        bool live = false;
        Timestamp first;
        Timestamp last;
    };

    struct Job {
        enum class Kind { write, checksum, remove } kind;
        std::size_t index = 0;
        std::uint64_t seq = 0;
        std::vector<FramePtr> frames;
        std::filesystem::path path;
    };

    struct Span {
        std::size_t index;
        std::uint64_t seq;
        Timestamp first;
        Timestamp last;
    };

    explicit MemLog(LogConfig config);

    std::vector<Span> snapshot() const;
    void seal_active();
    void advance();
    void enqueue(Job job);
    void persist_loop(std::stop_token st);
    void write_segment(Job& job);

    LogConfig config_;
    std::size_t budget_;
    std::vector<std::unique_ptr<Segment>> ring_;
    std::size_t active_ = 0;
    std::uint64_t next_seq_ = 1;

    std::mutex append_mu_;
    mutable std::shared_mutex ring_mu_;
    std::atomic<std::int64_t> last_ts_{0};
    std::atomic<bool> has_entries_{false};
    std::atomic<std::size_t> resident_{0};
    std::atomic<std::size_t> count_{0};
    mutable std::mutex notify_mu_;
    mutable std::condition_variable notify_cv_;

    std::mutex jobs_mu_;
    std::condition_variable_any jobs_cv_;
    std::condition_variable idle_cv_;
    std::deque<Job> jobs_;
    bool busy_ = false;
    std::atomic<std::uint64_t> persist_errors_{0};
    std::jthread persister_;
};

/// Filename for a persisted segment: <camera_id>-<first_ts_micros>.seg
std::string segment_filename(const CameraId& camera, Timestamp first);

}  // namespace mez
