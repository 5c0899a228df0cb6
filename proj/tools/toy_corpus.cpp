// Writes the built-in grammar corpus to a file, e.g. for a quick training run.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "tpt/data.hpp"

int main(int argc, char** argv) {
  CLI::App cli{"Generate the toy training corpus"};
  std::string out;
  std::size_t bytes = 100000;
  std::uint64_t seed = 7;
  cli.add_option("out", out, "output text file")->required();
  cli.add_option("--bytes", bytes, "approximate size in bytes");
  cli.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(cli, argc, argv);

  std::ofstream file(out, std::ios::trunc);
  if (!file) {
    std::cerr << "cannot write " << out << "\n";
    return 3;
  }
  file << tpt::data::generate_toy_corpus(bytes, seed);
  return file ? 0 : 3;
}
