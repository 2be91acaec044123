#include <stdio.h>
#include <string.h>

#include "reconcell.h"

#define CHECK(call)                                                          \
    do {                                                                     \
        RcStatus s_ = (call);                                                \
        if (s_ != RC_STATUS_OK) {                                            \
            fprintf(stderr, "%s -> %d: %s\n", #call, s_, rc_last_error()); \
            return 1;                                                        \
        }                                                                    \
    } while (0)

int main(void) {
    RcCell *cell = NULL;
    char *report = NULL;
    char *name = NULL;
    uint64_t cmd = 0;
    double now = 0.0;

    CHECK(rc_cell_new(NULL, true, &cell));
    if (rc_cell_command(cell, "ghost", "get_state", NULL, &cmd) != RC_STATUS_NOT_FOUND) {
        return 2;
    }
    CHECK(rc_cell_compile(cell, "sequence go {\n  state home: skill \"home\" on r1;\n}", NULL, &name));
    rc_string_free(name);
    CHECK(rc_cell_run(cell, "demo_screw", 300.0, &report));
    if (strstr(report, "\"final_outcome\":\"END_SUCCESS\"") == NULL) {
        return 3;
    }
    rc_string_free(report);
    CHECK(rc_cell_now(cell, &now));
    printf("%s %.2f\n", rc_version(), now);
    rc_cell_free(cell);
    return 0;
}
