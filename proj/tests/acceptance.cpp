#include "corrstress/corrstress.hpp"
int main() { return 0; }
