#pragma once

#include <memory>
#include <span>
#include <string>

namespace vaquita::judge {

struct JudgeVerdict {
  bool correct = false;
  int score = 1;  // 1..5
};

/// Maps (prediction, reference) to a verdict. Implementations must be
/// deterministic; an external-API judge would slot in behind this interface.
class Judge {
 public:
  virtual ~Judge() = default;
  virtual JudgeVerdict judge(const std::string& prediction,
                             const std::string& reference) const = 0;
};

/// Normalized string equality (lowercase, collapsed whitespace); score 5
/// when correct, 1 otherwise.
std::unique_ptr<Judge> make_exact_judge();

/// Deterministic hash-seeded verdicts for harness tests.
std::unique_ptr<Judge> make_mock_judge();

struct EvalSummary {
  double accuracy = 0.0;
  double score = 0.0;
};

EvalSummary evaluate(const Judge& judge, std::span<const std::string> preds,
                     std::span<const std::string> refs);

}  // namespace vaquita::judge
