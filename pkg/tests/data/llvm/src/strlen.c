unsigned my_strlen(const char *s) { unsigned n = 0; while (s[n]) n++; return n; }
int count_char(const char *s, char c) { int k = 0; for (unsigned i = 0; i < my_strlen(s); i++) if (s[i] == c) k++; return k; }
