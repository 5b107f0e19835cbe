#pragma once

/// Command implementations behind the CLI, written as plain functions over
/// argument structs so tests can drive them without a process boundary.
/// Commands print to an injectable stream, return process exit codes, and
/// leave all heavy lifting to the library modules.
///
/// Exit codes: 0 success, 1 input/config errors, 2 divergence detected
/// (adversarial training only, with the last good checkpoint printed).

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "polyseq/adv.hpp"
#include "polyseq/config.hpp"
#include "polyseq/discriminator.hpp"
#include "polyseq/errors.hpp"
#include "polyseq/eval.hpp"
#include "polyseq/generator.hpp"
#include "polyseq/midi.hpp"
#include "polyseq/nn.hpp"
#include "polyseq/tokenizer.hpp"
#include "polyseq/toygen.hpp"

namespace polyseq::cmd {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Shared training configuration.
// ---------------------------------------------------------------------------

inline cfg::Config train_config_schema() {
  cfg::Config c;
  c.define("corpus", "");
  c.define("vocab", "");            // vocabulary file; empty = use vocab_size
  c.define("vocab_size", "0");      // direct vocabulary size for toy corpora
  c.define("out_dir", "out");
  c.define("seq_len", "100");
  c.define("batch", "32");
  c.define("embedding_dim", "32");
  c.define("hidden_size", "512");
  c.define("epochs", "100");
  c.define("lr_pretrain", "0.001");
  c.define("lr_adv", "0.01");
  c.define("lr_disc", "0.0001");
  c.define("loss", "ce");           // ce | ls
  c.define("mode", "uncond");       // uncond | cond
  c.define("val_fraction", "0.1");
  c.define("split_seed", "777");    // train/val split; independent of --seed
  c.define("conv_layers", "5");
  c.define("feature_maps", "400");
  c.define("filter_width", "20");
  c.define("dropout", "0.25");
  c.define("rollouts", "32");
  c.define("discount", "0.99");
  c.define("rollout_update_rate", "0.9");
  c.define("g_steps", "1");
  c.define("d_steps", "5");
  c.define("d_epochs_per_step", "3");
  c.define("d_pretrain_steps", "1");
  c.define("checkpoint_every", "10");
  c.define("bleu_samples", "64");
  c.define("bleu_every", "1");
  c.define("init_from", "");        // adversarial phase: dir holding pretrain checkpoints
  return c;
}

struct TrainArgs {
  std::string config_path;     // empty = pure defaults
  std::uint64_t seed = 0;
  bool resume = false;
  std::string loss_override;   // "", "ce", "ls"
  std::string mode_override;   // "", "uncond", "cond"
  std::ostream* log = &std::cout;
};

namespace detail {

inline gen::StartKind parse_mode(const std::string& s) {
  if (s == "uncond") return gen::StartKind::kUnconditional;
  if (s == "cond") return gen::StartKind::kConditional;
  raise(Errc::kConfigError, "mode must be uncond or cond, got '" + s + "'");
}

inline disc::Head parse_head(const std::string& s) {
  if (s == "ce") return disc::Head::kSoftmaxCe;
  if (s == "ls") return disc::Head::kSigmoidLs;
  raise(Errc::kConfigError, "loss must be ce or ls, got '" + s + "'");
}

inline cfg::Config load_train_config(const TrainArgs& args) {
  cfg::Config c = train_config_schema();
  if (!args.config_path.empty()) c.load_file(args.config_path);
  if (!args.loss_override.empty()) c.set("loss", args.loss_override);
  if (!args.mode_override.empty()) c.set("mode", args.mode_override);
  return c;
}

struct DataBundle {
  std::vector<std::vector<int>> train_windows, val_windows;
  int vocab_size = 0;
};

/// Loads the encoded corpus, resolves the vocabulary size, splits 90/10 by
/// piece under the split seed, and slices fixed-length windows.
inline DataBundle load_training_data(const cfg::Config& c) {
  const std::string corpus_path = c.str("corpus");
  if (corpus_path.empty()) raise(Errc::kConfigError, "config key 'corpus' is required");
  auto pieces = tok::load_corpus(corpus_path);
  if (pieces.empty()) raise(Errc::kEmptyCorpus, "corpus " + corpus_path + " has no pieces");

  DataBundle data;
  if (!c.str("vocab").empty()) {
    data.vocab_size = tok::load_vocab(c.str("vocab")).size();
  } else {
    data.vocab_size = static_cast<int>(c.integer("vocab_size"));
  }
  if (data.vocab_size < 2) {
    raise(Errc::kConfigError, "provide a vocab file or a vocab_size of at least 2");
  }
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    for (int t : pieces[p]) {
      if (t < 1 || t >= data.vocab_size) {
        raise(Errc::kOutOfRangeToken, "piece " + std::to_string(p + 1) + " holds token " +
                                          std::to_string(t) + ", vocabulary size " +
                                          std::to_string(data.vocab_size));
      }
    }
  }

  std::vector<std::size_t> order(pieces.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng::SplitMix64 g(static_cast<std::uint64_t>(c.integer("split_seed")));
  rng::shuffle(order, g);
  auto val_pieces = static_cast<std::size_t>(
      std::llround(c.real("val_fraction") * static_cast<double>(pieces.size())));
  val_pieces = std::min(pieces.size() - 1, std::max<std::size_t>(1, val_pieces));

  std::vector<std::vector<int>> train, val;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < order.size() - val_pieces ? train : val).push_back(pieces[order[i]]);
  }
  const int seq_len = static_cast<int>(c.integer("seq_len"));
  data.train_windows = tok::slice_windows(train, seq_len);
  data.val_windows = tok::slice_windows(val, seq_len);
  if (data.train_windows.empty()) {
    raise(Errc::kEmptyCorpus, "no training windows: every piece is shorter than seq_len");
  }
  if (data.val_windows.empty()) {
    raise(Errc::kEmptyCorpus, "no validation windows: validation pieces shorter than seq_len");
  }
  return data;
}

inline gen::GeneratorConfig generator_config(const cfg::Config& c, int vocab_size) {
  gen::GeneratorConfig gc;
  gc.vocab_size = vocab_size;
  gc.embedding_dim = static_cast<int>(c.integer("embedding_dim"));
  gc.hidden_size = static_cast<int>(c.integer("hidden_size"));
  gc.seq_len = static_cast<int>(c.integer("seq_len"));
  gc.batch = static_cast<int>(c.integer("batch"));
  return gc;
}

inline disc::DiscriminatorConfig discriminator_config(const cfg::Config& c, int vocab_size) {
  disc::DiscriminatorConfig dc;
  dc.vocab_size = vocab_size;
  dc.embedding_dim = static_cast<int>(c.integer("embedding_dim"));
  dc.conv_layers = static_cast<int>(c.integer("conv_layers"));
  dc.feature_maps = static_cast<int>(c.integer("feature_maps"));
  dc.filter_width = static_cast<int>(c.integer("filter_width"));
  dc.seq_len = static_cast<int>(c.integer("seq_len"));
  dc.head = parse_head(c.str("loss"));
  dc.dropout = c.real("dropout");
  return dc;
}

inline adv::AdvConfig adv_config(const cfg::Config& c) {
  adv::AdvConfig ac;
  ac.rollouts = static_cast<int>(c.integer("rollouts"));
  ac.discount = c.real("discount");
  ac.rollout_update_rate = c.real("rollout_update_rate");
  ac.g_steps = static_cast<int>(c.integer("g_steps"));
  ac.d_steps = static_cast<int>(c.integer("d_steps"));
  ac.d_epochs_per_step = static_cast<int>(c.integer("d_epochs_per_step"));
  ac.g_lr = c.real("lr_adv");
  ac.d_lr = c.real("lr_disc");
  return ac;
}

/// Metadata that every checkpoint carries; component 1 = generator,
/// 2 = discriminator, 3 = rollout policy.
inline std::map<std::string, double> checkpoint_meta(const cfg::Config& c, int component,
                                                     int vocab_size, int epoch) {
  return {
      {"component", static_cast<double>(component)},
      {"vocab_size", static_cast<double>(vocab_size)},
      {"seq_len", static_cast<double>(c.integer("seq_len"))},
      {"embedding_dim", static_cast<double>(c.integer("embedding_dim"))},
      {"hidden_size", static_cast<double>(c.integer("hidden_size"))},
      {"conv_layers", static_cast<double>(c.integer("conv_layers"))},
      {"feature_maps", static_cast<double>(c.integer("feature_maps"))},
      {"filter_width", static_cast<double>(c.integer("filter_width"))},
      {"dropout", c.real("dropout")},
      {"head", parse_head(c.str("loss")) == disc::Head::kSigmoidLs ? 1.0 : 0.0},
      {"mode", parse_mode(c.str("mode")) == gen::StartKind::kConditional ? 1.0 : 0.0},
      {"epoch", static_cast<double>(epoch)},
  };
}

/// Highest-epoch checkpoint named <prefix>_e<N>.ckpt in dir, if any.
inline std::optional<std::pair<fs::path, int>> find_latest(const fs::path& dir,
                                                           const std::string& prefix) {
  if (!fs::is_directory(dir)) return std::nullopt;
  std::optional<std::pair<fs::path, int>> best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const std::string head = prefix + "_e";
    if (name.rfind(head, 0) != 0 || name.size() <= head.size() + 5) continue;
    if (name.substr(name.size() - 5) != ".ckpt") continue;
    const std::string digits = name.substr(head.size(), name.size() - head.size() - 5);
    if (digits.empty() ||
        !std::all_of(digits.begin(), digits.end(), [](char ch) { return std::isdigit(ch); })) {
      continue;
    }
    int epoch = std::stoi(digits);
    if (!best || epoch > best->second) best = {entry.path(), epoch};
  }
  return best;
}

inline std::string ckpt_name(const std::string& prefix, int epoch) {
  return prefix + "_e" + std::to_string(epoch) + ".ckpt";
}

/// Builds a generator from a checkpoint's own metadata.
inline gen::Generator<float> generator_from_checkpoint(const nn::Checkpoint& ckpt) {
  gen::GeneratorConfig gc;
  gc.vocab_size = static_cast<int>(ckpt.meta("vocab_size"));
  gc.embedding_dim = static_cast<int>(ckpt.meta("embedding_dim"));
  gc.hidden_size = static_cast<int>(ckpt.meta("hidden_size"));
  gc.seq_len = static_cast<int>(ckpt.meta("seq_len"));
  gen::Generator<float> g(gc, 0);
  nn::load_params(g.params(), ckpt);
  return g;
}

inline std::vector<std::vector<int>> load_token_file(const std::string& path) {
  auto seqs = tok::load_corpus(path);
  if (seqs.empty()) raise(Errc::kEmptyCorpus, "no sequences in " + path);
  return seqs;
}

/// A checkpoint trained against one vocabulary must not be applied to another.
inline void vocab_guard(const nn::Checkpoint& ckpt, int expected, const std::string& path) {
  const int got = static_cast<int>(ckpt.meta("vocab_size"));
  if (got != expected) {
    raise(Errc::kConfigError, path + " was trained with vocabulary size " + std::to_string(got) +
                                  " but the current vocabulary has size " +
                                  std::to_string(expected));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// cmd_toygen
// ---------------------------------------------------------------------------

struct ToygenArgs {
  std::string grammar;
  int n_pieces = 0;
  int piece_len = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::ostream* log = &std::cout;
};

inline int cmd_toygen(const ToygenArgs& args) {
  if (args.n_pieces < 1) raise(Errc::kConfigError, "need at least one piece");
  if (args.piece_len < 2) raise(Errc::kConfigError, "piece length must be at least 2");
  toy::ToyCorpus corpus = toy::make_toy(args.grammar, args.n_pieces, args.piece_len, args.seed);
  tok::save_corpus(corpus.pieces, args.out);
  (*args.log) << "grammar " << args.grammar << ": " << args.n_pieces << " pieces of "
              << args.piece_len << " tokens -> " << args.out << "\n"
              << "vocab_size " << corpus.vocab_size << ", entropy rate " << corpus.entropy_rate
              << " nats/token\n";
  return 0;
}

// ---------------------------------------------------------------------------
// cmd_tokenize
// ---------------------------------------------------------------------------

struct TokenizeArgs {
  std::string midi_dir;
  std::string out_corpus;
  std::string out_vocab;
  bool strict = false;
  int min_count = 10;
  std::ostream* log = &std::cout;
};

inline int cmd_tokenize(const TokenizeArgs& args) {
  std::vector<fs::path> files;
  if (!fs::is_directory(args.midi_dir)) {
    raise(Errc::kIoError, args.midi_dir + " is not a directory");
  }
  for (const auto& entry : fs::recursive_directory_iterator(args.midi_dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (ext == ".mid" || ext == ".midi") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) raise(Errc::kEmptyCorpus, "no .mid files under " + args.midi_dir);

  tok::ChordIndex chords;
  tok::TokenizeStats tstats;
  std::vector<std::vector<tok::Word>> word_pieces;
  int failed = 0;
  for (const auto& path : files) {
    try {
      std::ifstream is(path, std::ios::binary);
      if (!is) raise(Errc::kIoError, "cannot open file");
      std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                      std::istreambuf_iterator<char>());
      std::vector<std::string> warnings;
      midi::MidiPiece piece = midi::parse_midi(bytes, &warnings);
      midi::Classified cls = midi::classify_tracks(piece);
      auto segments = tok::segment(cls.melody, cls.chords, chords, piece.ticks_per_quarter,
                                   &tstats);
      word_pieces.push_back(tok::segments_to_words(segments));
    } catch (const Error& e) {
      ++failed;
      (*args.log) << "warning: " << path.string() << ": " << e.what() << "\n";
      if (args.strict) {
        (*args.log) << "aborting (--strict)\n";
        return 1;
      }
    }
  }
  if (word_pieces.empty()) raise(Errc::kEmptyCorpus, "every file failed to parse");

  tok::VocabBuildResult built = tok::build_vocab(word_pieces, chords, args.min_count);
  std::vector<std::vector<int>> encoded;
  encoded.reserve(built.kept_pieces.size());
  for (int pi : built.kept_pieces) {
    encoded.push_back(built.vocab.encode(word_pieces[static_cast<std::size_t>(pi)]));
  }
  tok::save_vocab(built.vocab, args.out_vocab);
  tok::save_corpus(encoded, args.out_corpus);

  (*args.log) << "parsed " << word_pieces.size() << "/" << files.size() << " files ("
              << failed << " failed)\n"
              << "kept " << built.kept_pieces.size() << " pieces, excluded "
              << built.excluded_pieces.size() << " with words under min_count "
              << args.min_count << "\n"
              << "vocab size " << built.vocab.size() << " -> " << args.out_vocab << "\n"
              << "corpus -> " << args.out_corpus << "\n";
  if (tstats.duration_clamps || tstats.segment_splits || tstats.notes_collapsed) {
    (*args.log) << "quantization: " << tstats.duration_clamps << " duration clamps, "
                << tstats.segment_splits << " segment splits, " << tstats.notes_collapsed
                << " collapsed notes\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// cmd_pretrain
// ---------------------------------------------------------------------------

inline int cmd_pretrain(const TrainArgs& args) {
  cfg::Config c = detail::load_train_config(args);
  (*args.log) << "configuration:\n";
  c.print(*args.log);

  detail::DataBundle data = detail::load_training_data(c);
  const gen::StartKind mode = detail::parse_mode(c.str("mode"));
  const fs::path out_dir = c.str("out_dir");
  fs::create_directories(out_dir);

  gen::Generator<float> g(detail::generator_config(c, data.vocab_size),
                          rng::derive_seed(args.seed, 1));
  disc::Discriminator<float> d(detail::discriminator_config(c, data.vocab_size),
                               rng::derive_seed(args.seed, 2));

  const int epochs = static_cast<int>(c.integer("epochs"));
  const int batch = g.config().batch;
  const int d_pretrain_steps = static_cast<int>(c.integer("d_pretrain_steps"));
  const int d_epochs_per_step = static_cast<int>(c.integer("d_epochs_per_step"));
  const double lr_g = c.real("lr_pretrain");
  const double lr_d = c.real("lr_disc");
  const fs::path metrics_path = out_dir / "metrics_pretrain.tsv";

  int start_epoch = 1;
  if (args.resume) {
    auto latest = detail::find_latest(out_dir, "gen_pre");
    if (!latest) raise(Errc::kIoError, "--resume: no pretrain checkpoint in " + out_dir.string());
    nn::Checkpoint gc = nn::read_checkpoint(latest->first.string());
    nn::load_params(g.params(), gc);
    nn::Checkpoint dc =
        nn::read_checkpoint((out_dir / detail::ckpt_name("disc_pre", latest->second)).string());
    nn::load_params(d.params(), dc);
    start_epoch = latest->second + 1;
    (*args.log) << "resuming from " << latest->first.string() << " at epoch " << start_epoch
                << "\n";
  } else {
    std::ofstream truncate(metrics_path);  // fresh run, fresh log
  }

  std::vector<std::size_t> order(data.train_windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<std::vector<int>> minibatch(static_cast<std::size_t>(batch));

  for (int epoch = start_epoch; epoch <= epochs; ++epoch) {
    rng::SplitMix64 shuffle_rng(rng::derive_seed(args.seed, 3, static_cast<std::uint64_t>(epoch)));
    rng::shuffle(order, shuffle_rng);
    double train_nll = 0.0;
    int batches = 0;
    for (std::size_t b0 = 0; b0 + static_cast<std::size_t>(batch) <= order.size();
         b0 += static_cast<std::size_t>(batch)) {
      for (int i = 0; i < batch; ++i) {
        minibatch[static_cast<std::size_t>(i)] = data.train_windows[order[b0 + static_cast<std::size_t>(i)]];
      }
      train_nll += g.nll_pretrain_step(minibatch, mode, lr_g);
      ++batches;
    }
    if (batches == 0) raise(Errc::kEmptyCorpus, "fewer training windows than one batch");
    train_nll /= batches;

    double d_loss_real = 0.0, d_loss_fake = 0.0;
    int d_updates = 0;
    for (int ds = 0; ds < d_pretrain_steps; ++ds) {
      auto fakes = g.sample_sequences(
          batch, mode, data.train_windows,
          rng::derive_seed(args.seed, 4, static_cast<std::uint64_t>(epoch),
                           static_cast<std::uint64_t>(ds)));
      rng::SplitMix64 pick(rng::derive_seed(args.seed, 5, static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(ds)));
      std::vector<std::vector<int>> real(static_cast<std::size_t>(batch));
      for (int i = 0; i < batch; ++i) {
        real[static_cast<std::size_t>(i)] = data.train_windows[pick.below(data.train_windows.size())];
      }
      for (int de = 0; de < d_epochs_per_step; ++de) {
        d_loss_real += d.train_step(real, disc::Label::kReal, lr_d);
        d_loss_fake += d.train_step(fakes, disc::Label::kFake, lr_d);
        ++d_updates;
      }
    }
    if (d_updates > 0) {
      d_loss_real /= d_updates;
      d_loss_fake /= d_updates;
    }

    double val_nll = g.evaluate_nll(data.val_windows, mode);
    {
      std::ofstream metrics(metrics_path, std::ios::app);
      metrics.setf(std::ios::fixed);
      metrics.precision(6);
      metrics << epoch << "\t" << train_nll << "\t" << val_nll << "\t" << d_loss_real << "\t"
              << d_loss_fake << "\n";
    }
    (*args.log) << "epoch " << epoch << ": train NLL " << train_nll << ", val NLL " << val_nll
                << "\n";

    if (epoch % c.integer("checkpoint_every") == 0 || epoch == epochs) {
      nn::save_checkpoint((out_dir / detail::ckpt_name("gen_pre", epoch)).string(), g.params(),
                          detail::checkpoint_meta(c, 1, data.vocab_size, epoch));
      nn::save_checkpoint((out_dir / detail::ckpt_name("disc_pre", epoch)).string(), d.params(),
                          detail::checkpoint_meta(c, 2, data.vocab_size, epoch));
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// cmd_advtrain
// ---------------------------------------------------------------------------

inline int cmd_advtrain(const TrainArgs& args) {
  cfg::Config c = detail::load_train_config(args);
  (*args.log) << "configuration:\n";
  c.print(*args.log);

  detail::DataBundle data = detail::load_training_data(c);
  const gen::StartKind mode = detail::parse_mode(c.str("mode"));
  const fs::path out_dir = c.str("out_dir");
  fs::create_directories(out_dir);

  gen::Generator<float> g(detail::generator_config(c, data.vocab_size),
                          rng::derive_seed(args.seed, 1));
  gen::Generator<float> rollout(detail::generator_config(c, data.vocab_size),
                                rng::derive_seed(args.seed, 1));
  disc::Discriminator<float> d(detail::discriminator_config(c, data.vocab_size),
                               rng::derive_seed(args.seed, 2));

  const adv::AdvConfig ac = detail::adv_config(c);
  const int epochs = static_cast<int>(c.integer("epochs"));
  const int bleu_samples = static_cast<int>(c.integer("bleu_samples"));
  const int bleu_every = static_cast<int>(c.integer("bleu_every"));
  const fs::path metrics_path = out_dir / "metrics_adv.tsv";

  int start_epoch = 1;
  std::string last_good = "(no adversarial checkpoint yet)";
  if (args.resume) {
    auto latest = detail::find_latest(out_dir, "gen_adv");
    if (!latest) raise(Errc::kIoError, "--resume: no adversarial checkpoint in " + out_dir.string());
    nn::Checkpoint gc = nn::read_checkpoint(latest->first.string());
    detail::vocab_guard(gc, data.vocab_size, latest->first.string());
    nn::load_params(g.params(), gc);
    nn::load_params(rollout.params(),
                    nn::read_checkpoint((out_dir / detail::ckpt_name("roll_adv", latest->second)).string()));
    nn::load_params(d.params(),
                    nn::read_checkpoint((out_dir / detail::ckpt_name("disc_adv", latest->second)).string()));
    start_epoch = latest->second + 1;
    last_good = latest->first.string();
    (*args.log) << "resuming from " << latest->first.string() << " at epoch " << start_epoch
                << "\n";
  } else {
    const fs::path init_dir = c.str("init_from").empty() ? out_dir : fs::path(c.str("init_from"));
    auto latest = detail::find_latest(init_dir, "gen_pre");
    if (!latest) {
      raise(Errc::kIoError,
            "no pretrain checkpoint under " + init_dir.string() + "; run the pretrain phase first");
    }
    nn::Checkpoint gc = nn::read_checkpoint(latest->first.string());
    detail::vocab_guard(gc, data.vocab_size, latest->first.string());
    nn::load_params(g.params(), gc);
    nn::load_params(d.params(),
                    nn::read_checkpoint((init_dir / detail::ckpt_name("disc_pre", latest->second)).string()));
    gen::sync_rollout(rollout, g);
    last_good = latest->first.string();
    std::ofstream truncate(metrics_path);
    (*args.log) << "initialized from " << latest->first.string() << "\n";
  }

  adv::DivergenceMonitor monitor;
  {
    auto samples = g.sample_sequences(bleu_samples, mode, data.train_windows,
                                      rng::derive_seed(args.seed, 6, 0));
    double baseline = eval::bleu4(samples, data.val_windows).bleu4;
    monitor.set_baseline_bleu(baseline);
    (*args.log) << "baseline BLEU-4 " << baseline << "\n";
  }

  double last_bleu = 0.0;
  for (int epoch = start_epoch; epoch <= epochs; ++epoch) {
    adv::EpochMetrics metrics;
    try {
      metrics = adv::adversarial_epoch(g, rollout, d, data.train_windows, ac, mode, args.seed,
                                       epoch);
    } catch (const Error& e) {
      if (e.code() != Errc::kNonFiniteGradient) throw;
      (*args.log) << "divergence detected: " << e.what() << "\n"
                  << "last good checkpoint: " << last_good << "\n";
      return 2;
    }

    std::optional<double> bleu;
    if (bleu_every > 0 && (epoch % bleu_every == 0 || epoch == epochs)) {
      auto samples = g.sample_sequences(
          bleu_samples, mode, data.train_windows,
          rng::derive_seed(args.seed, 6, static_cast<std::uint64_t>(epoch)));
      bleu = eval::bleu4(samples, data.val_windows).bleu4;
      last_bleu = *bleu;
    }
    metrics.bleu4 = last_bleu;

    {
      std::ofstream metrics_os(metrics_path, std::ios::app);
      metrics_os << metrics.tsv() << "\n";
    }
    (*args.log) << "epoch " << epoch << ": mean reward " << metrics.mean_reward << ", BLEU-4 "
                << metrics.bleu4 << "\n";

    if (auto diagnosis = monitor.observe(metrics.mean_reward, bleu)) {
      (*args.log) << "divergence detected: " << *diagnosis << "\n"
                  << "last good checkpoint: " << last_good << "\n";
      return 2;
    }

    if (epoch % c.integer("checkpoint_every") == 0 || epoch == epochs) {
      const fs::path gpath = out_dir / detail::ckpt_name("gen_adv", epoch);
      nn::save_checkpoint(gpath.string(), g.params(),
                          detail::checkpoint_meta(c, 1, data.vocab_size, epoch));
      nn::save_checkpoint((out_dir / detail::ckpt_name("roll_adv", epoch)).string(),
                          rollout.params(), detail::checkpoint_meta(c, 3, data.vocab_size, epoch));
      nn::save_checkpoint((out_dir / detail::ckpt_name("disc_adv", epoch)).string(), d.params(),
                          detail::checkpoint_meta(c, 2, data.vocab_size, epoch));
      last_good = gpath.string();
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// cmd_sample
// ---------------------------------------------------------------------------

struct SampleArgs {
  std::string checkpoint;
  std::string vocab;
  std::string out_dir;
  std::string corpus;  // real corpus; required for conditional mode
  int n = 0;
  std::string mode = "uncond";
  std::uint64_t seed = 0;
  std::ostream* log = &std::cout;
};

inline int cmd_sample(const SampleArgs& args) {
  nn::Checkpoint ckpt = nn::read_checkpoint(args.checkpoint);
  tok::Vocabulary vocab = tok::load_vocab(args.vocab);
  const int ckpt_vocab = static_cast<int>(ckpt.meta("vocab_size"));
  if (ckpt_vocab != vocab.size()) {
    raise(Errc::kConfigError, "checkpoint vocabulary size " + std::to_string(ckpt_vocab) +
                                  " does not match vocabulary file size " +
                                  std::to_string(vocab.size()));
  }
  gen::Generator<float> g = detail::generator_from_checkpoint(ckpt);

  const gen::StartKind mode = detail::parse_mode(args.mode);
  std::vector<std::vector<int>> pool;
  if (mode == gen::StartKind::kConditional) {
    if (args.corpus.empty()) {
      raise(Errc::kConfigError, "conditional sampling needs --corpus for start tokens");
    }
    pool = tok::slice_windows(detail::load_token_file(args.corpus), g.config().seq_len);
    if (pool.empty()) raise(Errc::kEmptyCorpus, "corpus has no windows of seq_len");
  }

  fs::create_directories(args.out_dir);
  auto seqs = g.sample_sequences(args.n, mode, pool, args.seed);

  const int render_tpq = 4 * tok::kQuantaPerQuarter;  // 48 ticks/quarter, exact grid
  std::ofstream tokens_os(fs::path(args.out_dir) / "samples.tokens");
  int start_remapped = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    auto& seq = seqs[i];
    for (int& t : seq) {
      if (t == gen::kStartToken) {
        t = tok::kRestId;  // decode rejects the start token; treat it as silence
        ++start_remapped;
      }
    }
    for (std::size_t j = 0; j < seq.size(); ++j) tokens_os << (j ? " " : "") << seq[j];
    tokens_os << "\n";

    auto words = vocab.decode(seq);
    auto streams = tok::words_to_streams(words, vocab.chords(), render_tpq);
    auto bytes = midi::render_midi(streams.melody, streams.chords, render_tpq);
    std::ostringstream name;
    name << "sample_" << i << ".mid";
    std::ofstream os(fs::path(args.out_dir) / name.str(), std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  }
  if (start_remapped > 0) {
    (*args.log) << "warning: " << start_remapped << " start tokens sampled; rendered as rests\n";
  }
  (*args.log) << seqs.size() << " samples -> " << args.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// cmd_bleu
// ---------------------------------------------------------------------------

struct BleuArgs {
  std::string candidates_file;  // token file, or:
  std::string checkpoint;       // sample n sequences from this model
  std::string refs_file;
  int n = 64;
  std::string mode = "uncond";
  std::uint64_t seed = 0;
  std::ostream* log = &std::cout;
};

inline int cmd_bleu(const BleuArgs& args) {
  auto refs = detail::load_token_file(args.refs_file);
  std::vector<std::vector<int>> candidates;
  if (!args.candidates_file.empty()) {
    candidates = detail::load_token_file(args.candidates_file);
  } else if (!args.checkpoint.empty()) {
    gen::Generator<float> g =
        detail::generator_from_checkpoint(nn::read_checkpoint(args.checkpoint));
    auto pool = tok::slice_windows(refs, g.config().seq_len);
    candidates = g.sample_sequences(args.n, detail::parse_mode(args.mode), pool, args.seed);
  } else {
    raise(Errc::kConfigError, "need a candidates file or a checkpoint");
  }
  eval::BleuReport report = eval::bleu4(candidates, refs);
  (*args.log) << report.pretty() << "\n" << report.tsv() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Exit-code boundary shared by the CLI and by tests.
// ---------------------------------------------------------------------------

template <typename Fn>
int run_guarded(Fn&& fn, std::ostream& err = std::cerr) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == Errc::kDivergenceDetected ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace polyseq::cmd
