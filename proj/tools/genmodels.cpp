// Regenerates the bundled model files from the built-in robot definitions.
//   genmodels [output-dir]   (default: models)
#include <cstdio>
#include <filesystem>
#include <string>

#include "core/model_library.hpp"

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "models";
  std::filesystem::create_directories(dir);
  for (const char* name : {"planar3", "quad12", "biped12"}) {
    const wbdrc::ModelInfo info = wbdrc::makeBuiltinModel(name);
    const std::string path = dir + "/" + name + ".rm";
    wbdrc::saveModelFile(info.model, path);
    std::printf("wrote %s\n", path.c_str());
  }
  return 0;
}
