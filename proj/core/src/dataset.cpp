#include "milora/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "milora/errors.hpp"
#include "milora/rng.hpp"

namespace milora {

namespace {

// Decimal digits of v as payload tokens, most significant first.
std::vector<int> digit_tokens(int v) {
  if (v == 0) return {kFirstPayloadToken};
  std::vector<int> out;
  while (v > 0) {
    out.push_back(kFirstPayloadToken + v % 10);
    v /= 10;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

EncodedSeq sample_copy(RngStream& rng, const TaskSpec& spec, int vocab_size,
                       bool reversed) {
  std::vector<int> payload(static_cast<size_t>(spec.payload_len));
  for (int& t : payload) t = rng.uniform_int(kFirstPayloadToken, vocab_size - 1);
  std::vector<int> target = payload;
  if (reversed) std::reverse(target.begin(), target.end());
  return encode_for_lm(payload, target);
}

EncodedSeq sample_modarith(RngStream& rng, const TaskSpec& spec) {
  const int a = rng.uniform_int(0, spec.modulus - 1);
  const int b = rng.uniform_int(0, spec.modulus - 1);
  std::vector<int> prompt = digit_tokens(a);
  prompt.push_back(kPlus);
  const std::vector<int> bd = digit_tokens(b);
  prompt.insert(prompt.end(), bd.begin(), bd.end());
  return encode_for_lm(prompt, digit_tokens((a + b) % spec.modulus));
}

// Corpus tokenized once: each distinct character maps to one payload token,
// assigned in sorted character order so the mapping is content-deterministic.
std::vector<int> load_corpus_tokens(const std::string& path, int vocab_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("dataset: cannot read corpus file " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (text.empty()) throw IoError("dataset: corpus file is empty: " + path);

  std::map<char, int> ids;
  for (char c : text) ids.emplace(c, 0);
  if (kFirstPayloadToken + static_cast<int>(ids.size()) > vocab_size)
    throw ConfigError("dataset: corpus has " + std::to_string(ids.size()) +
                      " distinct characters; vocabulary of " +
                      std::to_string(vocab_size) + " fits only " +
                      std::to_string(vocab_size - kFirstPayloadToken));
  int next = kFirstPayloadToken;
  for (auto& [c, id] : ids) id = next++;

  std::vector<int> tokens;
  tokens.reserve(text.size());
  for (char c : text) tokens.push_back(ids[c]);
  return tokens;
}

EncodedSeq sample_charlm(RngStream& rng, const TaskSpec& spec,
                         const std::vector<int>& corpus) {
  const int last_start = static_cast<int>(corpus.size()) - spec.window;
  const int start = rng.uniform_int(0, last_start);
  EncodedSeq s;
  s.inputs.assign(corpus.begin() + start, corpus.begin() + start + spec.window - 1);
  s.targets.assign(corpus.begin() + start + 1, corpus.begin() + start + spec.window);
  s.loss_mask.assign(s.inputs.size(), 1);  // plain LM: every position supervised
  s.prompt_len = std::max(1, spec.window / 2);
  return s;
}

}  // namespace

std::string task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::kCopy: return "copy";
    case TaskKind::kReverse: return "reverse";
    case TaskKind::kModArith: return "modarith";
    case TaskKind::kCharLM: return "charlm";
    case TaskKind::kMix: return "mix";
  }
  return "unknown";
}

void TaskSpec::validate(int vocab_size) const {
  switch (kind) {
    case TaskKind::kCopy:
    case TaskKind::kReverse:
      if (payload_len < 1) throw ConfigError("task: payload_len must be >= 1");
      if (vocab_size <= kFirstPayloadToken)
        throw ConfigError("task: vocabulary leaves no payload symbols");
      break;
    case TaskKind::kModArith:
      if (modulus < 2) throw ConfigError("task: modulus must be >= 2");
      if (vocab_size < kFirstPayloadToken + 10)
        throw ConfigError("task: modular arithmetic needs all ten digit symbols");
      break;
    case TaskKind::kCharLM:
      if (corpus_path.empty()) throw ConfigError("task: char-lm needs a corpus path");
      if (window < 2) throw ConfigError("task: char-lm window must be >= 2");
      break;
    case TaskKind::kMix: {
      if (parts.empty()) throw ConfigError("task: mix needs at least one part");
      if (parts.size() != weights.size())
        throw ConfigError("task: mix parts and weights disagree in count");
      for (double w : weights)
        if (!(w > 0.0)) throw ConfigError("task: mix weights must be positive");
      for (const TaskSpec& p : parts) {
        if (p.kind == TaskKind::kMix) throw ConfigError("task: mixes cannot nest");
        p.validate(vocab_size);
      }
      break;
    }
  }
}

EncodedSeq encode_for_lm(const std::vector<int>& prompt, const std::vector<int>& target) {
  if (prompt.empty() || target.empty())
    throw ContractError("encode_for_lm: prompt and target must be nonempty");
  std::vector<int> seq = {kBos};
  seq.insert(seq.end(), prompt.begin(), prompt.end());
  seq.push_back(kSep);
  seq.insert(seq.end(), target.begin(), target.end());
  seq.push_back(kEos);

  EncodedSeq s;
  s.prompt_len = static_cast<int>(prompt.size()) + 2;
  s.inputs.assign(seq.begin(), seq.end() - 1);
  s.targets.assign(seq.begin() + 1, seq.end());
  s.loss_mask.assign(s.inputs.size(), 0);
  for (size_t i = static_cast<size_t>(s.prompt_len) - 1; i < s.inputs.size(); ++i)
    s.loss_mask[i] = 1;
  return s;
}

int max_sequence_length(const TaskSpec& spec) {
  switch (spec.kind) {
    case TaskKind::kCopy:
    case TaskKind::kReverse:
      // BOS + payload + SEP + payload + EOS, minus the shifted-off last token.
      return 2 * spec.payload_len + 2;
    case TaskKind::kModArith: {
      int digits = 0;
      for (int v = spec.modulus - 1; v > 0 || digits == 0; v /= 10) ++digits;
      // BOS + digits '+' digits + SEP + digits + EOS, minus one.
      return 3 * digits + 3;
    }
    case TaskKind::kCharLM:
      return spec.window - 1;
    case TaskKind::kMix: {
      int longest = 0;
      for (const TaskSpec& p : spec.parts)
        longest = std::max(longest, max_sequence_length(p));
      return longest;
    }
  }
  throw ContractError("max_sequence_length: bad task kind");
}

DatasetSplit make_dataset(const TaskSpec& spec, int n, int vocab_size, uint64_t seed) {
  if (n < 2) throw ConfigError("dataset: need at least two examples");
  spec.validate(vocab_size);

  std::vector<int> corpus;
  std::vector<std::vector<int>> part_corpora;
  if (spec.kind == TaskKind::kCharLM) {
    corpus = load_corpus_tokens(spec.corpus_path, vocab_size);
    if (static_cast<int>(corpus.size()) < spec.window)
      throw ConfigError("dataset: corpus shorter than one char-lm window");
  } else if (spec.kind == TaskKind::kMix) {
    part_corpora.resize(spec.parts.size());
    for (size_t i = 0; i < spec.parts.size(); ++i)
      if (spec.parts[i].kind == TaskKind::kCharLM) {
        part_corpora[i] = load_corpus_tokens(spec.parts[i].corpus_path, vocab_size);
        if (static_cast<int>(part_corpora[i].size()) < spec.parts[i].window)
          throw ConfigError("dataset: corpus shorter than one char-lm window");
      }
  }

  double weight_total = 0.0;
  for (double w : spec.weights) weight_total += w;

  RngStream rng(seed, "dataset." + task_name(spec.kind));
  auto sample_one = [&](const TaskSpec& s, const std::vector<int>& corp) {
    switch (s.kind) {
      case TaskKind::kCopy: return sample_copy(rng, s, vocab_size, false);
      case TaskKind::kReverse: return sample_copy(rng, s, vocab_size, true);
      case TaskKind::kModArith: return sample_modarith(rng, s);
      case TaskKind::kCharLM: return sample_charlm(rng, s, corp);
      case TaskKind::kMix: break;
    }
    throw ContractError("dataset: unsampleable task kind");
  };

  std::vector<EncodedSeq> examples;
  std::vector<int> tags;
  examples.reserve(static_cast<size_t>(n));
  tags.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (spec.kind == TaskKind::kMix) {
      const double u = rng.uniform() * weight_total;
      double acc = 0.0;
      size_t pick = spec.parts.size() - 1;
      for (size_t p = 0; p < spec.parts.size(); ++p) {
        acc += spec.weights[p];
        if (u < acc) {
          pick = p;
          break;
        }
      }
      examples.push_back(sample_one(spec.parts[pick], part_corpora[pick]));
      tags.push_back(static_cast<int>(pick));
    } else {
      examples.push_back(sample_one(spec, corpus));
      tags.push_back(0);
    }
  }

  const int dev_n = std::max(1, n / 10);
  const int train_n = n - dev_n;
  DatasetSplit out;
  out.train.assign(examples.begin(), examples.begin() + train_n);
  out.dev.assign(examples.begin() + train_n, examples.end());
  out.train_tags.assign(tags.begin(), tags.begin() + train_n);
  out.dev_tags.assign(tags.begin() + train_n, tags.end());
  return out;
}

}  // namespace milora
