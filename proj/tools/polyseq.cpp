// Command-line front end: maps subcommands and flags onto the command
// functions and turns library errors into exit codes (1 = bad input,
// 2 = divergence during adversarial training).

#include <cstdint>
#include <string>

#include "CLI11.hpp"
#include "polyseq/commands.hpp"

int main(int argc, char** argv) {
  using namespace polyseq;

  CLI::App app{"polyphonic sequence model: tokenize, train, sample, evaluate"};
  app.require_subcommand(1);

  cmd::TokenizeArgs tok_args;
  auto* tokenize = app.add_subcommand("tokenize", "MIDI directory -> token corpus + vocabulary");
  tokenize->add_option("--midi-dir", tok_args.midi_dir, "directory scanned for .mid files")
      ->required();
  tokenize->add_option("--out-corpus", tok_args.out_corpus, "encoded corpus output")->required();
  tokenize->add_option("--out-vocab", tok_args.out_vocab, "vocabulary output")->required();
  tokenize->add_option("--min-count", tok_args.min_count,
                       "words rarer than this exclude their pieces");
  tokenize->add_flag("--strict", tok_args.strict, "abort on the first unparsable file");

  cmd::TrainArgs pre_args, adv_args;
  auto add_train_flags = [](CLI::App* sub, cmd::TrainArgs& args) {
    sub->add_option("--config", args.config_path, "key = value configuration file");
    sub->add_option("--seed", args.seed, "master seed (default 0)");
    sub->add_flag("--resume", args.resume, "continue from the latest checkpoint");
    sub->add_option("--loss", args.loss_override, "discriminator head: ce or ls")
        ->check(CLI::IsMember({"ce", "ls"}));
    sub->add_option("--mode", args.mode_override, "start-token mode: uncond or cond")
        ->check(CLI::IsMember({"uncond", "cond"}));
  };
  add_train_flags(app.add_subcommand("pretrain", "likelihood pretraining of both models"),
                  pre_args);
  add_train_flags(app.add_subcommand("advtrain", "adversarial fine-tuning with rollouts"),
                  adv_args);

  cmd::SampleArgs sample_args;
  auto* sample = app.add_subcommand("sample", "checkpoint -> MIDI files");
  sample->add_option("--checkpoint", sample_args.checkpoint, "generator checkpoint")->required();
  sample->add_option("--vocab", sample_args.vocab, "vocabulary file")->required();
  sample->add_option("--out-dir", sample_args.out_dir, "directory for .mid output")->required();
  sample->add_option("--n", sample_args.n, "number of sequences")->required();
  sample->add_option("--mode", sample_args.mode, "uncond or cond")
      ->check(CLI::IsMember({"uncond", "cond"}));
  sample->add_option("--corpus", sample_args.corpus, "real corpus for conditional starts");
  sample->add_option("--seed", sample_args.seed, "sampling seed");

  cmd::BleuArgs bleu_args;
  auto* bleu = app.add_subcommand("bleu", "BLEU-4 of candidates against a reference corpus");
  bleu->add_option("--refs", bleu_args.refs_file, "reference token corpus")->required();
  bleu->add_option("--candidates", bleu_args.candidates_file, "candidate token file");
  bleu->add_option("--checkpoint", bleu_args.checkpoint, "sample candidates from this model");
  bleu->add_option("--n", bleu_args.n, "samples to draw when using --checkpoint");
  bleu->add_option("--mode", bleu_args.mode, "uncond or cond")
      ->check(CLI::IsMember({"uncond", "cond"}));
  bleu->add_option("--seed", bleu_args.seed, "sampling seed");

  cmd::ToygenArgs toy_args;
  auto* toygen = app.add_subcommand("toygen", "synthetic corpus with known entropy rate");
  toygen->add_option("--grammar", toy_args.grammar, "motif, markov2, or chordprog")->required();
  toygen->add_option("--pieces", toy_args.n_pieces, "number of pieces")->required();
  toygen->add_option("--piece-len", toy_args.piece_len, "tokens per piece")->required();
  toygen->add_option("--out", toy_args.out, "corpus output path")->required();
  toygen->add_option("--seed", toy_args.seed, "generation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (tokenize->parsed()) return cmd::run_guarded([&] { return cmd::cmd_tokenize(tok_args); });
  if (app.get_subcommand("pretrain")->parsed())
    return cmd::run_guarded([&] { return cmd::cmd_pretrain(pre_args); });
  if (app.get_subcommand("advtrain")->parsed())
    return cmd::run_guarded([&] { return cmd::cmd_advtrain(adv_args); });
  if (sample->parsed()) return cmd::run_guarded([&] { return cmd::cmd_sample(sample_args); });
  if (bleu->parsed()) return cmd::run_guarded([&] { return cmd::cmd_bleu(bleu_args); });
  if (toygen->parsed()) return cmd::run_guarded([&] { return cmd::cmd_toygen(toy_args); });
  return 1;
}
