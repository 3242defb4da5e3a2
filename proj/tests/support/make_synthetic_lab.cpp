// Writes a synthetic lab dump and coordinate table into a directory:
//   make_synthetic_lab <dir> [epoch_seconds]
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "synthetic_lab.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: make_synthetic_lab <dir> [epoch_seconds]\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);
  wsnad::testing::SyntheticLab lab;
  if (argc > 2) lab.epoch_seconds = std::atof(argv[2]);
  lab.write_dump(dir / "data.txt");
  lab.write_coordinates(dir / "mote_locs.txt");
  return 0;
}
