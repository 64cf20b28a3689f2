#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "t2ic/harness.hpp"

using namespace t2ic;

namespace {

[[noreturn]] void usage() {
  std::cerr <<
      "usage: t2ic <command> [--key value ...]\n"
      "\n"
      "commands:\n"
      "  make-data           --n N --seed S --out PATH\n"
      "  pretrain-encoders   --data PATH --out CKPT [--config FILE] [--csv FILE]\n"
      "  pretrain-captioner  --data PATH --out CKPT [--config FILE] [--csv FILE]\n"
      "  pretrain-classifier --data PATH --out CKPT [--seed S] [--epochs E]\n"
      "  train               --config FILE\n"
      "  ablate              --config FILE --rows \"base,+F2F,+F2F+F2R\"\n"
      "  eval                --ckpt CKPT --data PATH --n N --seed S [--dump FILE]\n"
      "  grid                --ckpt CKPT --captions FILE --out FILE.ppm [--seed S]\n"
      "\n"
      "set T2IC_PRECISION=f64 to run every tape in double precision\n";
  std::exit(2);
}

using Flags = std::map<std::string, std::string>;

Flags parse_flags(int argc, char** argv, int start) {
  Flags f;
  for (int i = start; i < argc; ++i) {
    std::string key = argv[i];
    if (key.rfind("--", 0) != 0 || i + 1 >= argc) {
      std::cerr << "t2ic: expected --key value pairs, got '" << key << "'\n";
      std::exit(2);
    }
    f[key.substr(2)] = argv[++i];
  }
  return f;
}

const std::string& require(const Flags& f, const std::string& key) {
  auto it = f.find(key);
  if (it == f.end()) {
    std::cerr << "t2ic: missing required flag --" << key << "\n";
    std::exit(2);
  }
  return it->second;
}

std::string get(const Flags& f, const std::string& key, const std::string& def) {
  auto it = f.find(key);
  return it == f.end() ? def : it->second;
}

void reject_unknown(const Flags& f, std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : f) {
    bool ok = false;
    for (const char* a : allowed)
      if (k == a) ok = true;
    if (!ok) {
      std::cerr << "t2ic: unknown flag --" << k << "\n";
      std::exit(2);
    }
  }
}

PretrainOptions pretrain_options(const Flags& f) {
  PretrainOptions opt;
  if (f.count("config")) {
    Config c = Config::parse_file(f.at("config"));
    c.check_keys({"epochs", "batch_size", "lr", "seed", "gamma1", "gamma2", "gamma3", "tau"});
    opt.epochs = static_cast<int>(c.get_int("epochs", opt.epochs));
    opt.batch_size = static_cast<int>(c.get_int("batch_size", opt.batch_size));
    opt.lr = c.get_num("lr", opt.lr);
    opt.seed = static_cast<std::uint64_t>(c.get_int("seed", 1));
    opt.gamma1 = c.get_num("gamma1", opt.gamma1);
    opt.gamma2 = c.get_num("gamma2", opt.gamma2);
    opt.gamma3 = c.get_num("gamma3", opt.gamma3);
    opt.tau = c.get_num("tau", opt.tau);
  }
  return opt;
}

void print_report(const MetricReport& r) {
  std::printf("toy_fid,is_mean,is_std,r_precision,n_samples,seed\n");
  std::printf("%.17g,%.17g,%.17g,%.17g,%zu,%llu\n", r.fid, r.is_mean, r.is_std,
              r.r_precision, r.n_samples, static_cast<unsigned long long>(r.seed));
}

template <typename T>
MetricReport evaluate_checkpoint(const std::string& ckpt, const std::string& data,
                                 std::size_t n, std::uint64_t seed,
                                 const std::string& dump) {
  TensorFile tf = TensorFile::load(ckpt);
  BlockType bt = tf.get("meta.block_type")[0] != 0 ? BlockType::style : BlockType::ssacn;
  Rng init(1);
  TextEncoder<T> txt(init);
  ImageEncoder<T> img(init);
  IsClassifier<T> cls(init);
  Generator<T> gen(init, GeneratorConfig{bt});
  txt.params().load(tf);
  img.params().load(tf);
  cls.params().load(tf);
  gen.params().load(tf);
  gen.map_params().load(tf);
  Dataset ds = Dataset::load(data);
  return evaluate_model(ds, gen, txt, img, cls, n, seed, dump);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t next = s.find(',', pos);
    if (next == std::string::npos) next = s.size();
    std::string part = s.substr(pos, next - pos);
    if (!part.empty()) out.push_back(part);
    pos = next + 1;
  }
  return out;
}

template <typename T>
int run(const std::string& cmd, const Flags& f) {
  if (cmd == "make-data") {
    reject_unknown(f, {"n", "seed", "out"});
    build_dataset(std::stoull(require(f, "n")), std::stoull(require(f, "seed")),
                  require(f, "out"));
    std::printf("wrote %s\n", require(f, "out").c_str());
  } else if (cmd == "pretrain-encoders") {
    reject_unknown(f, {"data", "out", "config", "csv"});
    Dataset ds = Dataset::load(require(f, "data"));
    PretrainOptions opt = pretrain_options(f);
    Rng rng(opt.seed);
    TextEncoder<T> txt(rng);
    ImageEncoder<T> img(rng);
    std::string out = require(f, "out");
    pretrain_encoders(ds, opt, txt, img, out, get(f, "csv", out + ".csv"));
    std::printf("wrote %s\n", out.c_str());
  } else if (cmd == "pretrain-captioner") {
    reject_unknown(f, {"data", "out", "config", "csv"});
    Dataset ds = Dataset::load(require(f, "data"));
    PretrainOptions opt = pretrain_options(f);
    Rng rng(opt.seed);
    Captioner<T> cap(rng);
    std::string out = require(f, "out");
    double ce = pretrain_captioner(ds, opt, cap, out, get(f, "csv", out + ".csv"));
    std::printf("wrote %s (final cross-entropy %.17g)\n", out.c_str(), ce);
  } else if (cmd == "pretrain-classifier") {
    reject_unknown(f, {"data", "out", "seed", "epochs"});
    Dataset ds = Dataset::load(require(f, "data"));
    ClassifierOptions opt;
    opt.seed = std::stoull(get(f, "seed", "1"));
    opt.epochs = std::stoi(get(f, "epochs", std::to_string(opt.epochs)));
    Rng rng(opt.seed);
    IsClassifier<T> cls(rng);
    double acc = train_is_classifier(ds, opt, cls, require(f, "out"));
    std::printf("wrote %s (eval accuracy %.17g)\n", require(f, "out").c_str(), acc);
  } else if (cmd == "train") {
    reject_unknown(f, {"config"});
    RunConfig rc = RunConfig::from_file(require(f, "config"));
    Trainer<T> tr(rc);
    MetricReport r = tr.train();
    print_report(r);
  } else if (cmd == "ablate") {
    reject_unknown(f, {"config", "rows"});
    RunConfig rc = RunConfig::from_file(require(f, "config"));
    std::filesystem::create_directories(rc.out_dir);
    ablate<T>(rc, split_csv(require(f, "rows")), rc.out_dir + "/ablation.csv");
    std::printf("wrote %s/ablation.csv\n", rc.out_dir.c_str());
  } else if (cmd == "eval") {
    reject_unknown(f, {"ckpt", "data", "n", "seed", "dump"});
    MetricReport r = evaluate_checkpoint<T>(require(f, "ckpt"), require(f, "data"),
                                            std::stoull(require(f, "n")),
                                            std::stoull(require(f, "seed")),
                                            get(f, "dump", ""));
    print_report(r);
  } else if (cmd == "grid") {
    reject_unknown(f, {"ckpt", "captions", "out", "seed"});
    generate_grid<T>(require(f, "ckpt"), require(f, "captions"), require(f, "out"),
                     std::stoull(get(f, "seed", "1")));
    std::printf("wrote %s\n", require(f, "out").c_str());
  } else {
    usage();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) usage();
  std::string cmd = argv[1];
  Flags f = parse_flags(argc, argv, 2);
  const char* prec = std::getenv("T2IC_PRECISION");
  try {
    if (prec && std::strcmp(prec, "f64") == 0) return run<double>(cmd, f);
    if (!prec || std::strcmp(prec, "f32") == 0) return run<float>(cmd, f);
    std::cerr << "t2ic: T2IC_PRECISION must be f32 or f64\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "t2ic: " << e.what() << "\n";
    return 1;
  }
}
