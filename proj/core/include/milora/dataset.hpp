#pragma once

#include <string>
#include <vector>

#include "milora/train.hpp"

namespace milora {

// Token ids shared by every synthetic task.  Payload symbols start above the
// reserved block so the same vocabulary serves all tasks.
enum SpecialToken : int { kPad = 0, kBos = 1, kSep = 2, kEos = 3, kPlus = 4 };
constexpr int kFirstPayloadToken = 5;

enum class TaskKind { kCopy, kReverse, kModArith, kCharLM, kMix };

struct TaskSpec {
  TaskKind kind = TaskKind::kCopy;
  int payload_len = 8;      // copy/reverse: symbols per prompt
  int modulus = 97;         // modular arithmetic: answers are (a+b) mod this
  std::string corpus_path;  // char-LM text file
  int window = 16;          // char-LM characters per example
  std::vector<TaskSpec> parts;  // mix components (must not nest further mixes)
  std::vector<double> weights;  // mix weights; positive, normalized on use

  // Checks the spec against a vocabulary size.  Corpus readability is only
  // checked when the dataset is built.
  void validate(int vocab_size) const;  // throws ConfigError
};

struct DatasetSplit {
  std::vector<EncodedSeq> train, dev;
  // Mix component index per example (all zero for single tasks), parallel to
  // train/dev.
  std::vector<int> train_tags, dev_tags;
};

// prompt/target -> [BOS, prompt, SEP, target, EOS] shifted for next-token
// prediction; supervision covers the response region (predicting the target
// tokens and the EOS).  prompt_len counts BOS + prompt + SEP.
EncodedSeq encode_for_lm(const std::vector<int>& prompt, const std::vector<int>& target);

// Longest input row the task can emit (for checking against max_seq_len).
int max_sequence_length(const TaskSpec& spec);

// Deterministic dataset of n examples with a 90/10 train/dev split (the dev
// set is the final tenth, at least one example).  Throws ConfigError for
// specs that cannot fit the vocabulary and IoError for unreadable corpora.
DatasetSplit make_dataset(const TaskSpec& spec, int n, int vocab_size, uint64_t seed);

// Human-readable task name used in logs and table cells.
std::string task_name(TaskKind kind);

}  // namespace milora
