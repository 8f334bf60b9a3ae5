#include <cstdio>
int main() { std::puts("resample"); return 0; }
