#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "clonesim/common.hpp"
#include "clonesim/identity.hpp"

namespace clonesim {

// One pairwise contact interval, canonicalized so a.value < b.value.
struct ContactEvent {
    EntityId a;
    EntityId b;
    Timestamp start = 0;
    Timestamp end = 0;

    Seconds duration() const { return end - start; }
    bool touches(EntityId id) const { return a == id || b == id; }
    EntityId peer_of(EntityId id) const { return a == id ? b : a; }
};

ContactEvent make_contact(EntityId x, EntityId y, Timestamp start, Timestamp end);

struct ApAssociation {
    EntityId node;
    EntityId ap;
    Timestamp start = 0;
    Timestamp end = 0;
};

// Immutable time-sorted contact record. Shared read-only across workers.
class ContactTrace {
public:
    ContactTrace() = default;

    // Sorts and canonicalizes. Span defaults to [min start, max end].
    static ContactTrace from_events(std::vector<ContactEvent> events,
                                    std::shared_ptr<const EntityTable> table,
                                    std::optional<TimeSpan> span = std::nullopt);

    const std::vector<ContactEvent>& events() const { return events_; }
    const TimeSpan& span() const { return span_; }
    const EntityTable& table() const { return *table_; }
    std::shared_ptr<const EntityTable> table_ptr() const { return table_; }
    const std::vector<EntityId>& entities() const { return entities_; }
    bool empty() const { return events_.empty(); }

private:
    std::vector<ContactEvent> events_;
    TimeSpan span_{0, 0};
    std::shared_ptr<const EntityTable> table_ = std::make_shared<EntityTable>();
    std::vector<EntityId> entities_;
};

struct TraceSplit {
    ContactTrace training;
    ContactTrace evaluation;
    Timestamp boundary = 0;
};

// Per-entity view of a trace: every event touching the entity, in trace
// order. Built once so per-node passes stay linear overall.
class NodeEventIndex {
public:
    NodeEventIndex() = default;
    explicit NodeEventIndex(const ContactTrace& trace);
    const std::vector<ContactEvent>& events_of(EntityId id) const;

private:
    std::unordered_map<std::uint32_t, std::vector<ContactEvent>> by_node_;
    std::vector<ContactEvent> empty_;
};

// CSV ingestion. Plain or gzip files, `a,b,start,end` / `node,ap,start,end`
// with integer epoch seconds; an optional header line and #-comments are
// accepted. Any other malformed line is a hard error carrying its number.
std::vector<ContactEvent> load_contacts_csv(const std::string& path, EntityTable& table);
std::vector<ApAssociation> load_associations_csv(const std::string& path, EntityTable& table);
void save_contacts_csv(const std::string& path, const ContactTrace& trace);

// Node-node contacts inferred from co-association: one event per maximal
// interval during which the pair is associated to a common access point.
std::vector<ContactEvent> infer_contacts(std::vector<ApAssociation> associations);

// Each association viewed as a node<->AP contact (for certificates built on
// fixed infrastructure).
std::vector<ContactEvent> associations_as_contacts(const std::vector<ApAssociation>& associations);

// Keeps entities with >= min_contacts_per_day contacts on at least
// min_fraction_of_days of the trace's days; drops events touching removed
// entities. Only mobile nodes are subject to the filter.
ContactTrace filter_active(const ContactTrace& trace, int min_contacts_per_day,
                           double min_fraction_of_days, bool* all_dropped = nullptr);

// Partition by start time at boundary = begin + fraction * span; an event
// straddling the boundary is truncated into both halves so co-presence time
// is conserved.
TraceSplit split(const ContactTrace& trace, double fraction);

// Average weekly overlap between a node's training peer set and its weekly
// evaluation peer sets; only whole evaluation weeks count.
double stability(EntityId node, const TraceSplit& split, Seconds week_length = kSecondsPerWeek);

struct TraceStats {
    std::size_t total_nodes = 0;
    double avg_active_per_day = 0.0;
    double avg_contacts_per_node_per_day = 0.0;
    double avg_stability = 0.0;
    std::size_t events = 0;
    int days = 0;
};

TraceStats trace_stats(const ContactTrace& trace, double split_fraction = 0.25,
                       Seconds week_length = kSecondsPerWeek);

void write_stats_csv(std::ostream& os, const TraceStats& stats);

}  // namespace clonesim
