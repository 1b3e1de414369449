#include <stdio.h>
#include <stdlib.h>
#include "opcraft.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        OpcraftStatus s = (call);                                          \
        if (s != OPCRAFT_STATUS_OK) {                                      \
            fprintf(stderr, "%s: %d %s\n", #call, s, opcraft_last_error()); \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    OpcraftEnv *env = NULL;
    if (opcraft_env_new("nowhere", &env) != OPCRAFT_STATUS_UNKNOWN_ENV) return 2;
    CHECK(opcraft_env_new("screws", &env));
    OpcraftModel *model = NULL;
    CHECK(opcraft_learn(env, "ours", 10, 0, &model));
    size_t count = 0;
    CHECK(opcraft_model_operator_count(model, &count));
    size_t needed = 0;
    if (opcraft_model_operators_text(model, NULL, 0, &needed) != OPCRAFT_STATUS_BUFFER_TOO_SMALL) return 3;
    char *text = malloc(needed);
    CHECK(opcraft_model_operators_text(model, text, needed, NULL));
    double rate = -1.0;
    CHECK(opcraft_model_evaluate(model, 2, 0, 10.0, &rate));
    printf("operators %zu success %.1f\n%s", count, rate, text);
    free(text);
    opcraft_model_free(model);
    opcraft_env_free(env);
    return 0;
}
