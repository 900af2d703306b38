#include "sfbc/app/commands.hpp"

int main(int argc, char** argv) { return sfbc::app::run_cli(argc, argv); }
