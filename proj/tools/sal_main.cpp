#include "sal/cli.hpp"

int main(int argc, char** argv) { return sal::parse_and_dispatch(argc, argv); }
