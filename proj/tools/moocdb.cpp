#include "moocdb/cli.hpp"

int main(int argc, char** argv) { return moocdb::run(argc, argv); }
