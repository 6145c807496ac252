#include <cstdio>

int main() {
  std::puts("deckg: cli under construction");
  return 0;
}
