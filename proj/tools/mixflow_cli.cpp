#include <cstdio>

int main() {
  std::puts("mixflow: subcommands not wired up yet");
  return 1;
}
