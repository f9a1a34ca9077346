#include "mez/memlog.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>

namespace mez {

namespace fs = std::filesystem;

namespace {

bool ts_less(const FramePtr& f, Timestamp ts) { return f->ts() < ts; }
bool ts_greater(Timestamp ts, const FramePtr& f) { return ts < f->ts(); }

Result<std::vector<std::uint8_t>> read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        return make_error(Errc::io_error, "cannot open " + p.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

std::string segment_filename(const CameraId& camera, Timestamp first)
{
    std::string name = camera.str();
    for (char& c : name)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-'))
            c = '_';
    return name + "-" + std::to_string(first.micros) + ".seg";
}

MemLog::MemLog(LogConfig config)
    : config_(std::move(config)), budget_(config_.capacity_bytes / static_cast<std::size_t>(config_.segment_count))
{
    ring_.reserve(config_.segment_count);
    for (int i = 0; i < config_.segment_count; ++i)
        ring_.push_back(std::make_unique<Segment>());
    ring_[0]->seq = next_seq_++;
    persister_ = std::jthread([this](std::stop_token st) { persist_loop(st); });
}

MemLog::~MemLog()
{
    if (persister_.joinable()) {
        persister_.request_stop();
        jobs_cv_.notify_all();
    }
}

Result<std::unique_ptr<MemLog>> MemLog::create(LogConfig config)
{
    if (config.segment_count < 2)
        return make_error(Errc::invalid_argument, "segment_count must be at least 2");
    if (config.capacity_bytes / static_cast<std::size_t>(config.segment_count) == 0)
        return make_error(Errc::invalid_argument, "capacity too small for the segment count");
    if (config.encrypt_at_rest && !config.key)
        return make_error(Errc::invalid_argument, "encrypt_at_rest requires a key");
    if (config.persist_dir) {
        std::error_code ec;
        fs::create_directories(*config.persist_dir, ec);
        if (ec)
            return make_error(Errc::io_error, "cannot create " + config.persist_dir->string() + ": " + ec.message());
    }
    return std::unique_ptr<MemLog>(new MemLog(std::move(config)));
}

Result<std::unique_ptr<MemLog>> MemLog::recover(LogConfig config, RecoveryReport* report)
{
    if (!config.persist_dir)
        return make_error(Errc::invalid_argument, "recovery needs a persist_dir");
    auto created = create(config);
    if (!created)
        return created.error();
    std::unique_ptr<MemLog> log = std::move(created).value();

    struct Loaded {
        fs::path path;
        DecodedSegment seg;
        std::size_t bytes = 0;
    };
    RecoveryReport rep;
    std::vector<Loaded> valid;
    std::optional<EncryptionKey> key = config.key;
    for (const auto& de : fs::directory_iterator(*config.persist_dir)) {
        if (!de.is_regular_file() || de.path().extension() != ".seg")
            continue;
        auto bytes = read_file(de.path());
        Result<DecodedSegment> dec = bytes ? decode_segment_file(*bytes, key) : Result<DecodedSegment>(bytes.error());
        bool ok = dec.ok() && !dec->frames.empty();
        std::size_t total = 0;
        if (ok) {
            for (std::size_t i = 0; i < dec->frames.size(); ++i) {
                total += serialized_size(*dec->frames[i]);
                if (i > 0 && dec->frames[i]->ts() <= dec->frames[i - 1]->ts())
                    ok = false;
            }
            ok = ok && total <= log->budget_;
        }
        if (!ok) {
            spdlog::warn("recovery: discarding {}: {}", de.path().string(),
                         dec ? std::string("invalid contents") : dec.error().to_string());
            std::error_code ec;
            fs::rename(de.path(), fs::path(de.path()).concat(".corrupt"), ec);
            ++rep.discarded;
            continue;
        }
        valid.push_back({de.path(), std::move(dec).value(), total});
    }
    std::sort(valid.begin(), valid.end(),
              [](const Loaded& a, const Loaded& b) { return a.seg.frames.front()->ts() < b.seg.frames.front()->ts(); });

    std::vector<Loaded> kept;
    for (auto& l : valid) {
        if (!kept.empty() && l.seg.frames.front()->ts() <= kept.back().seg.frames.back()->ts()) {
            std::error_code ec;
            fs::remove(l.path, ec);
            ++rep.overlapping;
            continue;
        }
        kept.push_back(std::move(l));
    }
    const std::size_t room = log->ring_.size() - 1;
    if (kept.size() > room) {
        const std::size_t extra = kept.size() - room;
        for (std::size_t i = 0; i < extra; ++i) {
            std::error_code ec;
            fs::remove(kept[i].path, ec);
        }
        kept.erase(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(extra));
        rep.excess = static_cast<int>(extra);
    }

    std::size_t resident = 0, count = 0;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        Segment& s = *log->ring_[i];
        auto& frames = kept[i].seg.frames;
        s.first = frames.front()->ts();
        s.last = frames.back()->ts();
        s.bytes = kept[i].bytes;
        s.sealed = true;
        s.crc32 = kept[i].seg.body_crc;
        s.file = kept[i].path;
        s.live = true;
        s.seq = i == 0 ? s.seq : log->next_seq_++;
        resident += s.bytes;
        count += frames.size();
        s.entries = std::move(frames);
    }
    if (!kept.empty()) {
        log->active_ = kept.size();
        log->ring_[log->active_]->seq = log->next_seq_++;
        log->last_ts_ = log->ring_[kept.size() - 1]->last.micros;
        log->has_entries_ = true;
    }
    log->resident_ = resident;
    log->count_ = count;
    rep.loaded = static_cast<int>(kept.size());
    if (report)
        *report = rep;
    return log;
}

Result<AppendOutcome> MemLog::append(FramePtr f)
{
    std::lock_guard lk(append_mu_);
    if (has_entries_.load() && f->ts().micros <= last_ts_.load())
        return AppendOutcome::rejected_stale;
    const std::size_t sz = serialized_size(*f);
    if (sz > budget_)
        return make_error(Errc::frame_too_large,
                          std::to_string(sz) + " bytes exceeds segment budget " + std::to_string(budget_));

    if (ring_[active_]->bytes + sz > budget_) {
        seal_active();
        advance();
    }
    Segment& a = *ring_[active_];
    const Timestamp ts = f->ts();
    {
        std::unique_lock seg(a.mu);
        a.entries.push_back(std::move(f));
        a.bytes += sz;
    }
    {
        std::unique_lock ring(ring_mu_);
        if (!a.live) {
            a.live = true;
            a.first = ts;
        }
        a.last = ts;
    }
    resident_ += sz;
    ++count_;
    {
        std::lock_guard nl(notify_mu_);
        last_ts_ = ts.micros;
        has_entries_ = true;
    }
    notify_cv_.notify_all();
    return AppendOutcome::appended;
}

void MemLog::seal_active()
{
    Segment& a = *ring_[active_];
    std::vector<FramePtr> copy;
    {
        std::unique_lock seg(a.mu);
        if (a.entries.empty() || a.sealed)
            return;
        a.sealed = true;
        if (config_.persist_dir)
            a.file = *config_.persist_dir / segment_filename(a.entries.front()->camera(), a.entries.front()->ts());
        copy = a.entries;
    }
    // The checksum is computed off the append path.
    enqueue(Job{config_.persist_dir ? Job::Kind::write : Job::Kind::checksum, active_, a.seq, std::move(copy),
                a.file.value_or(fs::path{})});
}

void MemLog::advance()
{
    const std::size_t next = (active_ + 1) % ring_.size();
    Segment& s = *ring_[next];
    std::optional<fs::path> stale_file;
    {
        // Waits for readers of this segment only.
        std::unique_lock seg(s.mu);
        std::unique_lock ring(ring_mu_);
        resident_ -= s.bytes;
        count_ -= s.entries.size();
        s.entries.clear();
        s.bytes = 0;
        s.sealed = false;
        s.crc32.reset();
        stale_file = std::exchange(s.file, std::nullopt);
        s.seq = next_seq_++;
        s.live = false;
        active_ = next;
    }
    if (stale_file)
        enqueue(Job{Job::Kind::remove, next, 0, {}, *stale_file});
}

std::vector<MemLog::Span> MemLog::snapshot() const
{
    std::shared_lock ring(ring_mu_);
    std::vector<Span> out;
    const std::size_t n = ring_.size();
    for (std::size_t k = 1; k <= n; ++k) {
        const std::size_t i = (active_ + k) % n;
        const Segment& s = *ring_[i];
        if (!s.live)
            continue;
        out.push_back({i, s.seq, s.first, i == active_ ? Timestamp::max() : s.last});
    }
    return out;
}

Result<FramePtr> MemLog::get(Timestamp ts) const
{
    for (int attempt = 0; attempt < 16; ++attempt) {
        const auto spans = snapshot();
        auto it = std::upper_bound(spans.begin(), spans.end(), ts,
                                   [](Timestamp t, const Span& s) { return t < s.first; });
        if (it == spans.begin())
            return make_error(Errc::not_found);
        const Span& sp = *std::prev(it);
        if (ts > sp.last)
            return make_error(Errc::not_found);
        const Segment& s = *ring_[sp.index];
        std::shared_lock seg(s.mu);
        if (s.seq != sp.seq)
            continue;
        auto e = std::lower_bound(s.entries.begin(), s.entries.end(), ts, ts_less);
        if (e != s.entries.end() && (*e)->ts() == ts)
            return *e;
        return make_error(Errc::not_found);
    }
    return make_error(Errc::not_found);
}

Result<RangeResult> MemLog::get_range(Timestamp start, Timestamp end) const
{
    if (start > end)
        return make_error(Errc::invalid_range, "start is after end");
    for (;;) {
        const auto spans = snapshot();
        RangeResult out;
        if (spans.empty())
            return out;
        out.truncated_start = start < spans.front().first;
        bool recycled = false;
        for (const Span& sp : spans) {
            if (sp.last < start || sp.first > end)
                continue;
            const Segment& s = *ring_[sp.index];
            std::shared_lock seg(s.mu);
            if (s.seq != sp.seq) {
                recycled = true;
                break;
            }
            auto lo = std::lower_bound(s.entries.begin(), s.entries.end(), start, ts_less);
            auto hi = std::upper_bound(lo, s.entries.end(), end, ts_greater);
            out.frames.insert(out.frames.end(), lo, hi);
        }
        if (!recycled)
            return out;
    }
}

void MemLog::flush()
{
    {
        std::lock_guard lk(append_mu_);
        const bool had = !ring_[active_]->entries.empty();
        seal_active();
        if (had)
            advance();
    }
    wait_persisted();
}

void MemLog::enqueue(Job job)
{
    {
        std::lock_guard lk(jobs_mu_);
        jobs_.push_back(std::move(job));
    }
    jobs_cv_.notify_one();
}

void MemLog::wait_persisted()
{
    std::unique_lock lk(jobs_mu_);
    idle_cv_.wait(lk, [&] { return jobs_.empty() && !busy_; });
}

void MemLog::persist_loop(std::stop_token st)
{
    std::unique_lock lk(jobs_mu_);
    for (;;) {
        jobs_cv_.wait(lk, st, [&] { return !jobs_.empty(); });
        if (jobs_.empty())
            return;
        Job job = std::move(jobs_.front());
        jobs_.pop_front();
        busy_ = true;
        lk.unlock();
        if (job.kind != Job::Kind::remove) {
            const std::uint32_t crc = segment_body_crc(job.frames);
            {
                Segment& seg = *ring_[job.index];
                std::unique_lock sl(seg.mu);
                if (seg.seq == job.seq)
                    seg.crc32 = crc;
            }
            if (job.kind == Job::Kind::write)
                write_segment(job);
        } else {
            std::error_code ec;
            fs::remove(job.path, ec);
        }
        lk.lock();
        busy_ = false;
        if (jobs_.empty())
            idle_cv_.notify_all();
    }
}

void MemLog::write_segment(Job& job)
{
    const auto bytes =
        encode_segment_file(job.frames, config_.encrypt_at_rest ? config_.key : std::optional<EncryptionKey>{});
    const fs::path tmp = fs::path(job.path).concat(".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            ++persist_errors_;
            spdlog::error("persist: write to {} failed", tmp.string());
            return;
        }
    }
    std::error_code ec;
    fs::rename(tmp, job.path, ec);
    if (ec) {
        ++persist_errors_;
        spdlog::error("persist: rename to {} failed: {}", job.path.string(), ec.message());
    }
}

bool MemLog::wait_newer(Timestamp after, std::chrono::milliseconds timeout) const
{
    std::unique_lock lk(notify_mu_);
    return notify_cv_.wait_for(lk, timeout, [&] { return has_entries_.load() && last_ts_.load() > after.micros; });
}

std::optional<Timestamp> MemLog::first_ts() const
{
    const auto spans = snapshot();
    if (spans.empty())
        return std::nullopt;
    return spans.front().first;
}

std::optional<Timestamp> MemLog::last_ts() const
{
    if (!has_entries_.load())
        return std::nullopt;
    return Timestamp{last_ts_.load()};
}

std::size_t MemLog::size() const { return count_.load(); }
std::size_t MemLog::resident_bytes() const { return resident_.load(); }

std::vector<SegmentInfo> MemLog::segments() const
{
    std::vector<SegmentInfo> out;
    for (const Span& sp : snapshot()) {
        const Segment& s = *ring_[sp.index];
        std::shared_lock seg(s.mu);
        if (s.seq != sp.seq || s.entries.empty())
            continue;
        out.push_back({s.seq, s.entries.front()->ts(), s.entries.back()->ts(), s.entries.size(), s.bytes, s.sealed,
                       s.crc32});
    }
    return out;
}

std::vector<fs::path> MemLog::persisted_files() const
{
    std::vector<fs::path> out;
    for (const Span& sp : snapshot()) {
        const Segment& s = *ring_[sp.index];
        std::shared_lock seg(s.mu);
        if (s.seq == sp.seq && s.file)
            out.push_back(*s.file);
    }
    return out;
}

}  // namespace mez
