#include "vaquita/judge.hpp"

#include <cctype>
#include <cstdint>

#include "vaquita/errors.hpp"

namespace vaquita::judge {

namespace {

std::string normalize(const std::string& s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

class ExactJudge final : public Judge {
 public:
  JudgeVerdict judge(const std::string& prediction,
                     const std::string& reference) const override {
    const bool correct = normalize(prediction) == normalize(reference);
    return {correct, correct ? 5 : 1};
  }
};

class MockJudge final : public Judge {
 public:
  JudgeVerdict judge(const std::string& prediction,
                     const std::string& reference) const override {
    const std::uint64_t h = fnv1a(prediction + "\x1f" + reference);
    return {(h & 1) == 0, static_cast<int>(h % 5) + 1};
  }
};

}  // namespace

std::unique_ptr<Judge> make_exact_judge() {
  return std::make_unique<ExactJudge>();
}

std::unique_ptr<Judge> make_mock_judge() {
  return std::make_unique<MockJudge>();
}

EvalSummary evaluate(const Judge& judge, std::span<const std::string> preds,
                     std::span<const std::string> refs) {
  if (preds.size() != refs.size())
    throw FormatError("evaluate: prediction/reference counts disagree (" +
                      std::to_string(preds.size()) + " vs " +
                      std::to_string(refs.size()) + ")");
  if (preds.empty()) throw FormatError("evaluate: empty input");
  double correct = 0.0, score = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const JudgeVerdict v = judge.judge(preds[i], refs[i]);
    correct += v.correct ? 1.0 : 0.0;
    score += static_cast<double>(v.score);
  }
  return {correct / static_cast<double>(preds.size()),
          score / static_cast<double>(preds.size())};
}

}  // namespace vaquita::judge
