#include "cli/app.hpp"

int main(int argc, char** argv) { return cobin::cli::run_main(argc, argv); }
