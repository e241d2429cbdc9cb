// Time-stamped pixel-event streams: CSV parsing, cross-region coincidence
// matching within a time window, spatial-correlation histograms, background
// rejection and coincidence-image accumulation, plus the synthetic inverse of
// the whole acquisition chain for testing.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "biphoton/io.hpp"
#include "biphoton/spdc.hpp"

namespace biphoton {

struct EventRecord {
    int x = 0;
    int y = 0;
    double toa = 0.0; // ns

    bool operator==(const EventRecord&) const = default;
};

struct PixelRect {
    int x0 = 0, y0 = 0, width = 0, height = 0;

    bool contains(int x, int y) const {
        return x >= x0 && x < x0 + width && y >= y0 && y < y0 + height;
    }
    bool overlaps(const PixelRect& o) const {
        return x0 < o.x0 + o.width && o.x0 < x0 + width &&
               y0 < o.y0 + o.height && o.y0 < y0 + height;
    }
};

// Two disjoint, equally sized sensor regions; B maps onto A by translation.
struct RegionLayout {
    PixelRect region_a{0, 0, 128, 128};
    PixelRect region_b{128, 0, 128, 128};
    double pitch_mm = 0.055; // sensor pixel size, used for exported images

    void validate() const {
        if (region_a.width <= 0 || region_a.height <= 0)
            throw std::invalid_argument("RegionLayout: empty region");
        if (region_a.width != region_b.width || region_a.height != region_b.height)
            throw std::invalid_argument("RegionLayout: regions must have equal size");
        if (region_a.overlaps(region_b))
            throw std::invalid_argument("RegionLayout: regions must be disjoint");
    }

    // B pixel expressed in A coordinates
    std::pair<int, int> map_b_to_a(int x, int y) const {
        return {x - region_b.x0 + region_a.x0, y - region_b.y0 + region_a.y0};
    }
};

struct CoincidencePair {
    EventRecord event_a;
    EventRecord event_b;
    double dt = 0.0; // toa_b - toa_a, ns
};

struct ParseResult {
    std::vector<EventRecord> events;
    std::size_t rejected_lines = 0;
};

// ------------------------------------------------------------------ parsing --

// Event CSV: header "x,y,toa_ns", one event per line. Keeps file order.
// Aborts when more than 1% of data lines are malformed.
inline ParseResult parse_events(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw io_error("parse_events: empty input, missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "x,y,toa_ns")
        throw io_error("parse_events: malformed header '" + line + "', expected 'x,y,toa_ns'");

    ParseResult res;
    std::size_t data_lines = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++data_lines;
        EventRecord ev;
        char trailing;
        const int got = std::sscanf(line.c_str(), "%d,%d,%lf %c", &ev.x, &ev.y, &ev.toa, &trailing);
        if (got != 3 || ev.x < 0 || ev.y < 0 || !std::isfinite(ev.toa) || ev.toa < 0.0) {
            ++res.rejected_lines;
            continue;
        }
        res.events.push_back(ev);
    }
    if (data_lines > 0 && res.rejected_lines * 100 > data_lines)
        throw io_error("parse_events: " + std::to_string(res.rejected_lines) + " of " +
                       std::to_string(data_lines) + " lines malformed (> 1%)");
    return res;
}

inline ParseResult parse_events_file(const std::string& path) {
    auto in = detail::open_in(path);
    return parse_events(in);
}

inline void write_events_csv(std::ostream& out, const std::vector<EventRecord>& events) {
    out << "x,y,toa_ns\n";
    for (const EventRecord& ev : events)
        out << ev.x << ',' << ev.y << ',' << detail::fmt_double(ev.toa) << '\n';
}

inline void write_events_file(const std::string& path, const std::vector<EventRecord>& events) {
    auto out = detail::open_out(path);
    write_events_csv(out, events);
    if (!out) throw io_error("write failed: " + path);
}

// Pair CSV: "xa,ya,xb,yb,dt_ns"
inline void write_pairs_file(const std::string& path, const std::vector<CoincidencePair>& pairs) {
    auto out = detail::open_out(path);
    out << "xa,ya,xb,yb,dt_ns\n";
    for (const CoincidencePair& p : pairs)
        out << p.event_a.x << ',' << p.event_a.y << ',' << p.event_b.x << ',' << p.event_b.y
            << ',' << detail::fmt_double(p.dt) << '\n';
    if (!out) throw io_error("write failed: " + path);
}

// ----------------------------------------------------------------- matching --

namespace detail {

// sorted order independent of input permutation, even with tied timestamps
inline bool event_before(const EventRecord& a, const EventRecord& b) {
    if (a.toa != b.toa) return a.toa < b.toa;
    if (a.x != b.x) return a.x < b.x;
    return a.y < b.y;
}

} // namespace detail

// Greedy earliest-first matching: A events in time order each take the
// nearest-in-time unmatched B event with |dt| <= window, ties toward the
// earlier B event. Each event belongs to at most one pair. Events outside
// both regions are ignored. O(n log n) from the sort.
inline std::vector<CoincidencePair> find_coincidences(const std::vector<EventRecord>& events,
                                                      const RegionLayout& layout,
                                                      double window_ns = 5.0) {
    layout.validate();
    if (!(window_ns > 0.0)) throw std::invalid_argument("find_coincidences: window must be > 0");

    std::vector<EventRecord> a_events, b_events;
    for (const EventRecord& ev : events) {
        if (layout.region_a.contains(ev.x, ev.y)) a_events.push_back(ev);
        else if (layout.region_b.contains(ev.x, ev.y)) b_events.push_back(ev);
    }
    std::sort(a_events.begin(), a_events.end(), detail::event_before);
    std::sort(b_events.begin(), b_events.end(), detail::event_before);

    const int nb = static_cast<int>(b_events.size());
    std::vector<int> free_right(nb), free_left(nb);
    std::iota(free_right.begin(), free_right.end(), 0);
    std::iota(free_left.begin(), free_left.end(), 0);
    auto take = [&](int i) {
        free_right[i] = i + 1 < nb ? i + 1 : nb; // nb acts as "none"
        free_left[i] = i - 1;
    };
    auto right_of = [&](int i) -> int {
        while (i < nb && free_right[i] != i) {
            const int j = free_right[i];
            if (j < nb && free_right[j] != j) free_right[i] = free_right[j];
            i = j;
        }
        return i;
    };
    auto left_of = [&](int i) -> int {
        while (i >= 0 && free_left[i] != i) {
            const int j = free_left[i];
            if (j >= 0 && free_left[j] != j) free_left[i] = free_left[j];
            i = j;
        }
        return i;
    };

    std::vector<CoincidencePair> pairs;
    for (const EventRecord& a : a_events) {
        if (nb == 0) break;
        // first B with toa >= a.toa
        const int lo = static_cast<int>(std::lower_bound(b_events.begin(), b_events.end(), a.toa,
                                                         [](const EventRecord& e, double t) {
                                                             return e.toa < t;
                                                         }) -
                                        b_events.begin());
        const int r = lo < nb ? right_of(lo) : nb;
        const int l = left_of(std::min(lo, nb) - 1);
        int chosen = -1;
        const double dr = r < nb ? b_events[r].toa - a.toa : std::numeric_limits<double>::infinity();
        const double dl = l >= 0 ? a.toa - b_events[l].toa : std::numeric_limits<double>::infinity();
        if (l >= 0 && dl <= dr && dl <= window_ns) chosen = l; // tie goes to the earlier B
        else if (r < nb && dr <= window_ns) chosen = r;
        if (chosen < 0) continue;
        take(chosen);
        pairs.push_back({a, b_events[chosen], b_events[chosen].toa - a.toa});
    }
    return pairs;
}

// Estimates the accidental-coincidence rate by re-running the matcher with
// all B timestamps shifted by +offset_ns (default +100 ns), far outside any
// true correlation.
inline std::size_t shifted_window_accidentals(const std::vector<EventRecord>& events,
                                              const RegionLayout& layout, double window_ns = 5.0,
                                              double offset_ns = 100.0) {
    std::vector<EventRecord> shifted = events;
    for (EventRecord& ev : shifted)
        if (layout.region_b.contains(ev.x, ev.y)) ev.toa += offset_ns;
    return find_coincidences(shifted, layout, window_ns).size();
}

// --------------------------------------------------------------- histograms --

struct CorrelationHistogram {
    int size = 0;               // pixels per axis of a region
    std::vector<double> counts; // (coord_a, mapped coord_b), row = coord_a
    double diagonal_fraction = 0.0; // mass within +-1 pixel of the diagonal

    double& at(int a, int b) { return counts[static_cast<std::size_t>(a) * size + b]; }
    const double& at(int a, int b) const { return counts[static_cast<std::size_t>(a) * size + b]; }
};

enum class Axis { X, Y };

inline CorrelationHistogram spatial_correlation(const std::vector<CoincidencePair>& pairs,
                                                const RegionLayout& layout, Axis axis) {
    layout.validate();
    if (pairs.empty()) throw std::invalid_argument("spatial_correlation: no pairs");
    CorrelationHistogram h;
    h.size = axis == Axis::X ? layout.region_a.width : layout.region_a.height;
    h.counts.assign(static_cast<std::size_t>(h.size) * h.size, 0.0);
    double on_diag = 0.0;
    for (const CoincidencePair& p : pairs) {
        const auto [bx, by] = layout.map_b_to_a(p.event_b.x, p.event_b.y);
        const int ca = axis == Axis::X ? p.event_a.x - layout.region_a.x0
                                       : p.event_a.y - layout.region_a.y0;
        const int cb = axis == Axis::X ? bx - layout.region_a.x0 : by - layout.region_a.y0;
        if (ca < 0 || ca >= h.size || cb < 0 || cb >= h.size) continue;
        h.at(ca, cb) += 1.0;
        if (std::abs(ca - cb) <= 1) on_diag += 1.0;
    }
    h.diagonal_fraction = on_diag / static_cast<double>(pairs.size());
    return h;
}

// Keeps pairs whose mapped positions differ by at most max_offset_px per axis.
inline std::vector<CoincidencePair> background_filter(const std::vector<CoincidencePair>& pairs,
                                                      const RegionLayout& layout,
                                                      int max_offset_px = 1) {
    layout.validate();
    std::vector<CoincidencePair> kept;
    kept.reserve(pairs.size());
    for (const CoincidencePair& p : pairs) {
        const auto [bx, by] = layout.map_b_to_a(p.event_b.x, p.event_b.y);
        if (std::abs(bx - p.event_a.x) <= max_offset_px && std::abs(by - p.event_a.y) <= max_offset_px)
            kept.push_back(p);
    }
    return kept;
}

// Per-pixel counts of the region-A members of the surviving pairs (A-side
// convention; pass use_b_side for the B-side image).
inline CoincidenceImage coincidence_image_from_pairs(const std::vector<CoincidencePair>& pairs,
                                                     const RegionLayout& layout,
                                                     bool use_b_side = false) {
    layout.validate();
    if (layout.region_a.width != layout.region_a.height)
        throw std::invalid_argument("coincidence_image_from_pairs: regions must be square");
    GridSpec g;
    g.n = layout.region_a.width;
    g.pitch = layout.pitch_mm;
    CoincidenceImage img(g, ImagePlane::Image);
    for (const CoincidencePair& p : pairs) {
        int x, y;
        if (use_b_side) {
            const auto [bx, by] = layout.map_b_to_a(p.event_b.x, p.event_b.y);
            x = bx - layout.region_a.x0;
            y = by - layout.region_a.y0;
        } else {
            x = p.event_a.x - layout.region_a.x0;
            y = p.event_a.y - layout.region_a.y0;
        }
        if (x >= 0 && x < g.n && y >= 0 && y < g.n) img.at(x, y) += 1.0;
    }
    return img;
}

// ---------------------------------------------------------------- synthesis --

// Test-harness inverse of the acquisition chain: Poisson-timed photon pairs
// with positions drawn from the normalized expected image (A side; B at the
// mapped position with Gaussian timestamp jitter), plus uniform background in
// both regions. Deterministic per seed; output sorted by time of arrival.
inline std::vector<EventRecord> synthesize_event_stream(const CoincidenceImage& expected,
                                                        const RegionLayout& layout,
                                                        double pair_rate_hz, double duration_s,
                                                        double jitter_ns, double background_rate_hz,
                                                        std::uint64_t seed) {
    layout.validate();
    if (pair_rate_hz < 0.0 || background_rate_hz < 0.0 || duration_s < 0.0 || jitter_ns < 0.0)
        throw std::invalid_argument("synthesize_event_stream: rates, duration and jitter must be >= 0");
    if (expected.grid.n != layout.region_a.width || layout.region_a.width != layout.region_a.height)
        throw std::invalid_argument("synthesize_event_stream: expected image must match the (square) region size");

    std::mt19937_64 rng(seed);
    const double duration_ns = duration_s * 1e9;

    // cumulative distribution over pixels of the expected image
    std::vector<double> cdf(expected.counts.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < expected.counts.size(); ++k) {
        acc += std::max(0.0, expected.counts[k]);
        cdf[k] = acc;
    }
    if (!(acc > 0.0) && pair_rate_hz > 0.0)
        throw std::invalid_argument("synthesize_event_stream: expected image is all zero");

    std::vector<EventRecord> events;
    const long long n_pairs = pair_rate_hz > 0.0
        ? std::poisson_distribution<long long>(pair_rate_hz * duration_s)(rng)
        : 0;
    std::uniform_real_distribution<double> utime(0.0, duration_ns);
    std::uniform_real_distribution<double> upos(0.0, acc);
    std::normal_distribution<double> jitter(0.0, jitter_ns);
    const int n = expected.grid.n;
    for (long long k = 0; k < n_pairs; ++k) {
        const double u = upos(rng);
        const std::size_t px = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
        const int ix = static_cast<int>(px) / n;
        const int iy = static_cast<int>(px) % n;
        const double t = utime(rng);
        EventRecord a{layout.region_a.x0 + ix, layout.region_a.y0 + iy, t};
        double tb = t + (jitter_ns > 0.0 ? jitter(rng) : 0.0);
        tb = std::max(0.0, tb);
        EventRecord b{layout.region_b.x0 + ix, layout.region_b.y0 + iy, tb};
        events.push_back(a);
        events.push_back(b);
    }

    // uniform background, background_rate_hz per region
    for (const PixelRect* region : {&layout.region_a, &layout.region_b}) {
        const long long n_bg = background_rate_hz > 0.0
            ? std::poisson_distribution<long long>(background_rate_hz * duration_s)(rng)
            : 0;
        std::uniform_int_distribution<int> ux(region->x0, region->x0 + region->width - 1);
        std::uniform_int_distribution<int> uy(region->y0, region->y0 + region->height - 1);
        for (long long k = 0; k < n_bg; ++k) {
            const int x = ux(rng);
            const int y = uy(rng);
            events.push_back({x, y, utime(rng)});
        }
    }

    std::sort(events.begin(), events.end(), detail::event_before);
    return events;
}

} // namespace biphoton
