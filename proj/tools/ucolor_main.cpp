#include "ucolor/app.hpp"

int main(int argc, char** argv) { return ucolor::app::run(argc, argv); }
