#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bard/config.hpp"
#include "bard/minimization.hpp"
#include "bard/stage1.hpp"

namespace bard {

enum class TrialStage { Stage1, Stage2, Completed, Terminated };

std::string_view to_string(TrialStage s);

struct TrialEvent {
    long long sequence = 0;
    std::string timestamp;
    std::string kind;
    Json payload;

    Json to_json() const;
    static TrialEvent from_json(const Json& j);
    friend bool operator==(const TrialEvent&, const TrialEvent&) = default;
};

namespace event_kind {
inline constexpr const char* TrialCreated = "TrialCreated";
inline constexpr const char* PatientEnrolled = "PatientEnrolled";
inline constexpr const char* OutcomeRecorded = "OutcomeRecorded";
inline constexpr const char* DecisionTaken = "DecisionTaken";
inline constexpr const char* StageAdvanced = "StageAdvanced";
inline constexpr const char* DoseClosed = "DoseClosed";
inline constexpr const char* TrialCompleted = "TrialCompleted";
}  // namespace event_kind

struct ConductPatient {
    int id = 0;
    int stage = 1;
    int dose = 0;
    Assignment::Kind route = Assignment::Kind::NotEnrolled;
    std::optional<Arm> arm;  ///< stage-2 arm, or the arm a stage-1 patient counts towards
    std::vector<int> covariates;
    bool eligible = true;
    std::optional<bool> dlt;
    std::optional<bool> response;
};

struct Stage2Plan {
    std::optional<int> mtd;
    std::vector<int> doses;  ///< {low, high} or a single dose
    int n1_low = 0;
    int n1_high = 0;
    int quota = 0;
    bool overridden = false;
    std::vector<std::string> warnings;

    bool two_arm() const { return doses.size() == 2; }
};

/// Outcome of an enrollment request.
struct EnrollOutcome {
    bool enrolled = false;
    std::optional<int> patient_id;
    Json assignment;
    std::string advisory;
    std::vector<TrialEvent> events;
};

/*
 * One trial as a fold over its event log. Commands validate, emit events and
 * apply them through the same code path replay uses; events derived from
 * others (DecisionTaken, DoseClosed) are recomputed on replay and must match
 * the log, which makes replay a fidelity check as well as recovery.
 *
 * Stage-2 randomization consumes counter_uniform(seed, draw) with draw
 * incremented per randomized patient, so assignments are reproducible from
 * the log alone.
 */
class TrialEngine {
   public:
    static TrialEngine create(const std::string& trial_id, const DesignConfig& design,
                              std::uint64_t seed, const std::string& timestamp,
                              const std::string& design_id = "");
    static TrialEngine replay(const std::vector<TrialEvent>& log);

    EnrollOutcome enroll(std::vector<int> covariates, bool eligible,
                         const std::string& timestamp);
    /// Returns the appended events (empty for an identical re-submission).
    std::vector<TrialEvent> record_outcome(int patient_id, std::optional<bool> dlt,
                                           std::optional<bool> response, bool amend,
                                           const std::string& timestamp);
    /// Stage 1 -> stage 2 (or termination when no MTD); stage 2 -> completed.
    std::vector<TrialEvent> advance(std::optional<std::pair<int, int>> override_doses,
                                    bool force, const std::string& timestamp);

    const std::string& id() const { return id_; }
    TrialStage stage() const { return stage_; }
    const DesignConfig& design() const { return ctx_->design; }
    const std::vector<TrialEvent>& log() const { return log_; }
    const std::vector<ConductPatient>& patients() const { return patients_; }
    const Stage1Controller& stage1() const { return *stage1_; }
    const std::optional<Stage2Plan>& plan() const { return plan_; }
    const std::vector<CohortDecision>& decisions() const { return decisions_; }
    int stage2_enrolled() const { return stage2_enrolled_; }

    /// Decision summary: current dose, open backfill doses, eliminations, stop flags.
    Json summary() const;
    Json state() const;
    Json report() const;

   private:
    TrialEngine() = default;

    std::vector<TrialEvent> commit(const std::string& kind, Json payload,
                                   const std::string& timestamp);
    void apply(const TrialEvent& e, bool replaying);
    std::vector<std::pair<std::string, Json>> apply_input(const TrialEvent& e);
    std::vector<std::pair<std::string, Json>> closure_events();
    void check_derived(const TrialEvent& e);

    /// Stage-2 arm for the next patient; updates the given counts/block state.
    Arm pick_arm(ArmCounts& counts, std::optional<Arm>& block,
                 const std::vector<int>& covariates, std::uint64_t draw) const;
    Stage2Plan make_plan(std::optional<std::pair<int, int>> override_doses) const;
    ConductPatient& patient(int id);

    std::string id_;
    std::string design_id_;
    std::uint64_t seed_ = 0;
    std::shared_ptr<const DesignContext> ctx_;
    std::unique_ptr<Stage1Controller> stage1_;
    TrialStage stage_ = TrialStage::Stage1;
    std::vector<ConductPatient> patients_;
    std::vector<CohortDecision> decisions_;
    std::optional<Stage2Plan> plan_;
    ArmCounts counts_;
    int stage2_enrolled_ = 0;
    std::uint64_t draws_ = 0;
    std::optional<Arm> block_second_;
    std::vector<bool> closed_;  ///< dose already reported by a DoseClosed event
    std::vector<bool> eliminated_;
    std::string completion_reason_;

    std::vector<TrialEvent> log_;
    std::deque<std::pair<std::string, Json>> expected_;
};

/*
 * Append-only JSON-lines storage: <root>/trials/<id>/events.jsonl and
 * <root>/designs/<id>.json. Every line is one event; a trial directory is
 * self-contained and can be copied elsewhere and replayed.
 */
class EventStore {
   public:
    explicit EventStore(std::string root);

    const std::string& root() const { return root_; }
    std::string trial_dir(const std::string& id) const;
    bool trial_exists(const std::string& id) const;
    std::vector<std::string> trial_ids() const;

    void append(const std::string& id, const std::vector<TrialEvent>& events) const;
    std::vector<TrialEvent> load(const std::string& id) const;

    void save_design(const std::string& id, const Json& design) const;
    std::optional<Json> load_design(const std::string& id) const;

   private:
    std::string root_;
};

/// Reads an events.jsonl file; malformed lines raise ReplayError naming the
/// sequence number the line should have carried.
std::vector<TrialEvent> read_event_log(const std::string& path);
void append_event_log(const std::string& path, const std::vector<TrialEvent>& events);

std::string utc_timestamp();

/// Per-n BOIN decision table: escalate if y <= e, de-escalate if y >= d,
/// eliminate if y >= x (absent entries mean "never").
Json boundary_table(const BoinParams& params, int max_n);

}  // namespace bard
