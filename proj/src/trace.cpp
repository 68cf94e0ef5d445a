#include "clonesim/trace.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

namespace clonesim {

ContactEvent make_contact(EntityId x, EntityId y, Timestamp start, Timestamp end) {
    if (x == y) throw Error("contact endpoints must differ");
    if (start > end) throw Error("contact start must not exceed end");
    ContactEvent ev;
    ev.a = std::min(x, y);
    ev.b = std::max(x, y);
    ev.start = start;
    ev.end = end;
    return ev;
}

ContactTrace ContactTrace::from_events(std::vector<ContactEvent> events,
                                       std::shared_ptr<const EntityTable> table,
                                       std::optional<TimeSpan> span) {
    for (ContactEvent& ev : events) {
        if (ev.a == ev.b) throw Error("contact endpoints must differ");
        if (ev.start > ev.end) throw Error("contact start must not exceed end");
        if (ev.b < ev.a) std::swap(ev.a, ev.b);
    }
    std::sort(events.begin(), events.end(), [](const ContactEvent& x, const ContactEvent& y) {
        return std::tie(x.start, x.a.value, x.b.value, x.end) <
               std::tie(y.start, y.a.value, y.b.value, y.end);
    });

    ContactTrace t;
    t.table_ = std::move(table);
    if (span) {
        t.span_ = *span;
    } else if (!events.empty()) {
        Timestamp lo = events.front().start;
        Timestamp hi = lo;
        for (const ContactEvent& ev : events) hi = std::max(hi, ev.end);
        t.span_ = TimeSpan{lo, hi};
    }
    for (const ContactEvent& ev : events) {
        if (!t.span_.contains(ev.start) || !t.span_.contains(ev.end))
            throw Error("contact event outside trace span");
    }

    std::set<std::uint32_t> ids;
    for (const ContactEvent& ev : events) {
        ids.insert(ev.a.value);
        ids.insert(ev.b.value);
    }
    for (std::uint32_t v : ids) t.entities_.push_back(t.table_->id_at(v));
    t.events_ = std::move(events);
    return t;
}

namespace {

// Line reader over zlib's gzFile: reads gzip members transparently and
// falls back to plain bytes for uncompressed files.
class LineReader {
public:
    explicit LineReader(const std::string& path) : path_(path) {
        file_ = gzopen(path.c_str(), "rb");
        if (file_ == nullptr) throw IoError("cannot open " + path);
    }
    ~LineReader() {
        if (file_ != nullptr) gzclose(file_);
    }
    LineReader(const LineReader&) = delete;
    LineReader& operator=(const LineReader&) = delete;

    bool next(std::string& line) {
        line.clear();
        char buf[4096];
        bool got = false;
        for (;;) {
            if (gzgets(file_, buf, sizeof buf) == nullptr) {
                int err = 0;
                const char* msg = gzerror(file_, &err);
                if (err != 0 && err != Z_STREAM_END) throw IoError(path_ + ": " + msg);
                return got;
            }
            got = true;
            line += buf;
            if (!line.empty() && line.back() == '\n') {
                line.pop_back();
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return true;
            }
        }
    }

private:
    std::string path_;
    gzFile file_ = nullptr;
};

std::vector<std::string_view> split_fields(const std::string& line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t comma = line.find(',', pos);
        if (comma == std::string::npos) {
            out.emplace_back(line.data() + pos, line.size() - pos);
            break;
        }
        out.emplace_back(line.data() + pos, comma - pos);
        pos = comma + 1;
    }
    return out;
}

Timestamp parse_time(std::string_view s, const std::string& file, std::size_t line) {
    Timestamp value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError(file, line, "bad timestamp '" + std::string(s) + "'");
    return value;
}

bool is_header(const std::vector<std::string_view>& f, const char* c0, const char* c1) {
    return f.size() == 4 && f[0] == c0 && f[1] == c1 && f[2] == "start" && f[3] == "end";
}

}  // namespace

std::vector<ContactEvent> load_contacts_csv(const std::string& path, EntityTable& table) {
    LineReader reader(path);
    std::vector<ContactEvent> events;
    std::string line;
    std::size_t lineno = 0;
    while (reader.next(line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto f = split_fields(line);
        if (lineno == 1 && is_header(f, "a", "b")) continue;
        if (f.size() != 4) throw ParseError(path, lineno, "expected 4 fields, got " + std::to_string(f.size()));
        if (f[0].empty() || f[1].empty()) throw ParseError(path, lineno, "empty entity name");
        Timestamp start = parse_time(f[2], path, lineno);
        Timestamp end = parse_time(f[3], path, lineno);
        if (start > end) throw ParseError(path, lineno, "start > end");
        if (f[0] == f[1]) throw ParseError(path, lineno, "self-contact");
        EntityId a = table.intern(f[0], EntityKind::MobileNode);
        EntityId b = table.intern(f[1], EntityKind::MobileNode);
        events.push_back(make_contact(a, b, start, end));
    }
    return events;
}

std::vector<ApAssociation> load_associations_csv(const std::string& path, EntityTable& table) {
    LineReader reader(path);
    std::vector<ApAssociation> assocs;
    std::string line;
    std::size_t lineno = 0;
    while (reader.next(line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto f = split_fields(line);
        if (lineno == 1 && is_header(f, "node", "ap")) continue;
        if (f.size() != 4) throw ParseError(path, lineno, "expected 4 fields, got " + std::to_string(f.size()));
        if (f[0].empty() || f[1].empty()) throw ParseError(path, lineno, "empty entity name");
        Timestamp start = parse_time(f[2], path, lineno);
        Timestamp end = parse_time(f[3], path, lineno);
        if (start > end) throw ParseError(path, lineno, "start > end");
        ApAssociation a;
        a.node = table.intern(f[0], EntityKind::MobileNode);
        a.ap = table.intern(f[1], EntityKind::AccessPoint);
        a.start = start;
        a.end = end;
        assocs.push_back(a);
    }
    return assocs;
}

void save_contacts_csv(const std::string& path, const ContactTrace& trace) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << "a,b,start,end\n";
    for (const ContactEvent& ev : trace.events()) {
        os << trace.table().name(ev.a) << ',' << trace.table().name(ev.b) << ',' << ev.start << ','
           << ev.end << '\n';
    }
    if (!os.flush()) throw IoError("write failed: " + path);
}

std::vector<ContactEvent> infer_contacts(std::vector<ApAssociation> associations) {
    // Per (pair, any shared AP) interval overlaps, merged into maximal
    // co-presence intervals per pair.
    std::map<std::uint32_t, std::vector<ApAssociation>> by_ap;
    for (const ApAssociation& a : associations) by_ap[a.ap.value].push_back(a);

    std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::pair<Timestamp, Timestamp>>>
        overlaps;
    for (auto& [ap, list] : by_ap) {
        std::sort(list.begin(), list.end(), [](const ApAssociation& x, const ApAssociation& y) {
            return std::tie(x.start, x.node.value) < std::tie(y.start, y.node.value);
        });
        for (std::size_t i = 0; i < list.size(); ++i) {
            for (std::size_t j = i + 1; j < list.size(); ++j) {
                if (list[j].start > list[i].end) break;  // sorted by start
                if (list[j].node == list[i].node) continue;
                Timestamp lo = std::max(list[i].start, list[j].start);
                Timestamp hi = std::min(list[i].end, list[j].end);
                if (lo > hi) continue;
                auto key = std::minmax(list[i].node.value, list[j].node.value);
                overlaps[{key.first, key.second}].emplace_back(lo, hi);
            }
        }
    }

    std::vector<ContactEvent> events;
    std::unordered_map<std::uint32_t, EntityId> node_ids;
    for (const ApAssociation& a : associations) node_ids.emplace(a.node.value, a.node);
    for (auto& [pair, ivals] : overlaps) {
        std::sort(ivals.begin(), ivals.end());
        Timestamp cur_lo = ivals.front().first;
        Timestamp cur_hi = ivals.front().second;
        auto flush = [&](Timestamp lo, Timestamp hi) {
            events.push_back(make_contact(node_ids.at(pair.first), node_ids.at(pair.second), lo, hi));
        };
        for (std::size_t i = 1; i < ivals.size(); ++i) {
            // closed second-granularity intervals: [a,b] and [b+1,c] are
            // contiguous co-presence
            if (ivals[i].first <= cur_hi + 1) {
                cur_hi = std::max(cur_hi, ivals[i].second);
            } else {
                flush(cur_lo, cur_hi);
                cur_lo = ivals[i].first;
                cur_hi = ivals[i].second;
            }
        }
        flush(cur_lo, cur_hi);
    }
    std::sort(events.begin(), events.end(), [](const ContactEvent& x, const ContactEvent& y) {
        return std::tie(x.start, x.a.value, x.b.value, x.end) <
               std::tie(y.start, y.a.value, y.b.value, y.end);
    });
    return events;
}

std::vector<ContactEvent> associations_as_contacts(const std::vector<ApAssociation>& associations) {
    std::vector<ContactEvent> events;
    events.reserve(associations.size());
    for (const ApAssociation& a : associations)
        events.push_back(make_contact(a.node, a.ap, a.start, a.end));
    return events;
}

NodeEventIndex::NodeEventIndex(const ContactTrace& trace) {
    for (const ContactEvent& ev : trace.events()) {
        by_node_[ev.a.value].push_back(ev);
        by_node_[ev.b.value].push_back(ev);
    }
}

const std::vector<ContactEvent>& NodeEventIndex::events_of(EntityId id) const {
    auto it = by_node_.find(id.value);
    return it == by_node_.end() ? empty_ : it->second;
}

namespace {

// Per-entity contacts-per-day-bucket counts, by event start time.
std::unordered_map<std::uint32_t, std::unordered_map<int, int>> daily_counts(
    const ContactTrace& trace) {
    std::unordered_map<std::uint32_t, std::unordered_map<int, int>> counts;
    const Timestamp origin = trace.span().begin;
    const int last_day = day_count(trace.span()) - 1;
    for (const ContactEvent& ev : trace.events()) {
        int d = std::min(day_index(ev.start, origin), last_day);
        ++counts[ev.a.value][d];
        ++counts[ev.b.value][d];
    }
    return counts;
}

}  // namespace

ContactTrace filter_active(const ContactTrace& trace, int min_contacts_per_day,
                           double min_fraction_of_days, bool* all_dropped) {
    if (min_fraction_of_days < 0.0 || min_fraction_of_days > 1.0)
        throw ConfigError("min_fraction_of_days must be in [0,1]");
    const int days = day_count(trace.span());
    auto counts = daily_counts(trace);

    std::unordered_set<std::uint32_t> keep;
    bool any_node = false;
    for (EntityId id : trace.entities()) {
        if (id.kind != EntityKind::MobileNode) {
            keep.insert(id.value);  // infrastructure is never filtered
            continue;
        }
        any_node = true;
        int qualifying = 0;
        auto it = counts.find(id.value);
        if (it != counts.end()) {
            for (const auto& [day, c] : it->second)
                if (c >= min_contacts_per_day) ++qualifying;
        }
        if (static_cast<double>(qualifying) >= min_fraction_of_days * days - 1e-9)
            keep.insert(id.value);
    }

    std::vector<ContactEvent> kept;
    for (const ContactEvent& ev : trace.events()) {
        if (keep.count(ev.a.value) && keep.count(ev.b.value)) kept.push_back(ev);
    }
    bool dropped_all = any_node && kept.empty();
    if (all_dropped != nullptr) *all_dropped = dropped_all;
    if (dropped_all)
        std::cerr << "warning: activity thresholds removed every node from the trace\n";
    return ContactTrace::from_events(std::move(kept), trace.table_ptr(), trace.span());
}

TraceSplit split(const ContactTrace& trace, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must be in (0,1)");
    const TimeSpan span = trace.span();
    const Timestamp boundary =
        span.begin + static_cast<Timestamp>(std::llround(fraction * static_cast<double>(span.length())));

    std::vector<ContactEvent> training;
    std::vector<ContactEvent> evaluation;
    for (const ContactEvent& ev : trace.events()) {
        if (ev.start >= boundary) {
            evaluation.push_back(ev);
        } else if (ev.end <= boundary) {
            training.push_back(ev);
        } else {
            ContactEvent head = ev;
            head.end = boundary;
            ContactEvent tail = ev;
            tail.start = boundary;
            training.push_back(head);
            evaluation.push_back(tail);
        }
    }
    TraceSplit out;
    out.boundary = boundary;
    out.training = ContactTrace::from_events(std::move(training), trace.table_ptr(),
                                             TimeSpan{span.begin, boundary});
    out.evaluation = ContactTrace::from_events(std::move(evaluation), trace.table_ptr(),
                                               TimeSpan{boundary, span.end});
    return out;
}

double stability(EntityId node, const TraceSplit& split, Seconds week_length) {
    std::set<std::uint32_t> training_peers;
    for (const ContactEvent& ev : split.training.events()) {
        if (!ev.touches(node)) continue;
        EntityId peer = ev.peer_of(node);
        if (peer.kind == EntityKind::MobileNode) training_peers.insert(peer.value);
    }
    if (training_peers.empty())
        throw Error("stability undefined: node met no peers during training");

    const TimeSpan eval = split.evaluation.span();
    const int weeks = static_cast<int>(eval.length() / week_length);  // whole weeks only
    if (weeks <= 0) return 0.0;

    std::vector<std::set<std::uint32_t>> weekly(static_cast<std::size_t>(weeks));
    for (const ContactEvent& ev : split.evaluation.events()) {
        if (!ev.touches(node)) continue;
        EntityId peer = ev.peer_of(node);
        if (peer.kind != EntityKind::MobileNode) continue;
        auto w = static_cast<std::size_t>(floor_div(ev.start - eval.begin, week_length));
        if (w < weekly.size()) weekly[w].insert(peer.value);
    }

    double sum = 0.0;
    for (const auto& s : weekly) {
        std::size_t inter = 0;
        for (std::uint32_t p : s) inter += training_peers.count(p);
        sum += static_cast<double>(inter) / static_cast<double>(training_peers.size());
    }
    return sum / weeks;
}

TraceStats trace_stats(const ContactTrace& trace, double split_fraction, Seconds week_length) {
    TraceStats stats;
    if (trace.empty()) return stats;

    stats.events = trace.events().size();
    stats.days = day_count(trace.span());

    std::vector<EntityId> nodes;
    for (EntityId id : trace.entities())
        if (id.kind == EntityKind::MobileNode) nodes.push_back(id);
    stats.total_nodes = nodes.size();
    if (nodes.empty()) return stats;

    auto counts = daily_counts(trace);
    long long active_node_days = 0;
    long long contact_sum = 0;
    std::vector<int> active_per_day(static_cast<std::size_t>(stats.days), 0);
    for (EntityId id : nodes) {
        auto it = counts.find(id.value);
        if (it == counts.end()) continue;
        for (const auto& [day, c] : it->second) {
            ++active_per_day[static_cast<std::size_t>(day)];
            ++active_node_days;
            contact_sum += c;
        }
    }
    long long active_total = 0;
    for (int c : active_per_day) active_total += c;
    stats.avg_active_per_day = static_cast<double>(active_total) / stats.days;
    stats.avg_contacts_per_node_per_day =
        active_node_days > 0 ? static_cast<double>(contact_sum) / static_cast<double>(active_node_days)
                             : 0.0;

    // Stability for every node in one pass over the split halves.
    TraceSplit s = split(trace, split_fraction);
    const TimeSpan eval = s.evaluation.span();
    const int weeks = static_cast<int>(eval.length() / week_length);
    std::unordered_map<std::uint32_t, std::set<std::uint32_t>> training_peers;
    for (const ContactEvent& ev : s.training.events()) {
        if (ev.a.kind != EntityKind::MobileNode || ev.b.kind != EntityKind::MobileNode) continue;
        training_peers[ev.a.value].insert(ev.b.value);
        training_peers[ev.b.value].insert(ev.a.value);
    }
    std::unordered_map<std::uint32_t, std::vector<std::set<std::uint32_t>>> weekly;
    if (weeks > 0) {
        for (const ContactEvent& ev : s.evaluation.events()) {
            if (ev.a.kind != EntityKind::MobileNode || ev.b.kind != EntityKind::MobileNode) continue;
            auto w = static_cast<std::size_t>(floor_div(ev.start - eval.begin, week_length));
            if (w >= static_cast<std::size_t>(weeks)) continue;
            auto add = [&](std::uint32_t who, std::uint32_t peer) {
                auto& buckets = weekly[who];
                if (buckets.empty()) buckets.resize(static_cast<std::size_t>(weeks));
                buckets[w].insert(peer);
            };
            add(ev.a.value, ev.b.value);
            add(ev.b.value, ev.a.value);
        }
    }
    double stab_sum = 0.0;
    std::size_t stab_n = 0;
    for (const auto& [node, peers] : training_peers) {
        if (peers.empty()) continue;
        double sum = 0.0;
        if (weeks > 0) {
            auto it = weekly.find(node);
            if (it != weekly.end()) {
                for (const auto& s_week : it->second) {
                    std::size_t inter = 0;
                    for (std::uint32_t p : s_week) inter += peers.count(p);
                    sum += static_cast<double>(inter) / static_cast<double>(peers.size());
                }
            }
            sum /= weeks;
        }
        stab_sum += sum;
        ++stab_n;
    }
    stats.avg_stability = stab_n > 0 ? stab_sum / static_cast<double>(stab_n) : 0.0;
    return stats;
}

void write_stats_csv(std::ostream& os, const TraceStats& stats) {
    os << "metric,value\n";
    os << "total_nodes," << stats.total_nodes << '\n';
    os << "events," << stats.events << '\n';
    os << "days," << stats.days << '\n';
    os << "avg_active_per_day," << stats.avg_active_per_day << '\n';
    os << "avg_contacts_per_node_per_day," << stats.avg_contacts_per_node_per_day << '\n';
    os << "avg_stability," << stats.avg_stability << '\n';
}

}  // namespace clonesim
