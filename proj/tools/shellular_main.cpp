#include <cstdio>

int main() {
  std::puts("shellular: subcommands not wired yet");
  return 1;
}
