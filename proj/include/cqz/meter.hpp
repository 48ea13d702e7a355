#pragma once

#include <cstdint>

namespace cqz {

/* Machine-independent work accounting. One unit is charged per hash probe,
 * per binary-search step, per tree-node visit, and per dictionary lookup.
 * Every delay and answer-time guarantee in this codebase is stated and tested
 * in these units, never in wall time. */
class WorkMeter {
public:
    void tick(uint64_t n = 1) { units_ += n; }
    uint64_t units() const { return units_; }
    void reset() { units_ = 0; }

private:
    uint64_t units_ = 0;
};

/* Call sites take a nullable meter so production paths can skip accounting. */
inline void tick(WorkMeter* m, uint64_t n = 1) {
    if (m) m->tick(n);
}

/* Tracks the largest gap between consecutive outputs of a stream, plus the
 * lead-in (start to first output) and tail (last output to end-of-stream).
 * All of those must stay within the delay budget. */
class DelayProbe {
public:
    explicit DelayProbe(const WorkMeter& m) : meter_(m), mark_(m.units()) {}

    void on_output() {
        bump();
        ++outputs_;
    }
    void on_end() { bump(); }

    uint64_t max_gap() const { return max_gap_; }
    uint64_t outputs() const { return outputs_; }

private:
    void bump() {
        uint64_t now = meter_.units();
        if (now - mark_ > max_gap_) max_gap_ = now - mark_;
        mark_ = now;
    }

    const WorkMeter& meter_;
    uint64_t mark_;
    uint64_t max_gap_ = 0;
    uint64_t outputs_ = 0;
};

}  // namespace cqz
