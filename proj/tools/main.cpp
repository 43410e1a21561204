#include <cstdio>
int main(){ std::puts("graspforge"); return 0; }
