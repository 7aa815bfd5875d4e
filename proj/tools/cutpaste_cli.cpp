// Placeholder; real CLI lands with the trainer and eval modules.
int main() { return 0; }
