/* Generated stub patch.
 * path fingerprint: ffd55688efbc8a7e9fcfa6d9bd0aa9e42c5788d3bd9297612ab56d4752425822
 * solver model:     8cde0cf3cba51f1ec984c5d5d795b167330045f786d84a49c76112da53f8151a
 */
#include <sys/types.h>

static int angr_global_var_ptrace = 0;

long ptrace(int request, pid_t pid, void *addr, void *data) {
    angr_global_var_ptrace = angr_global_var_ptrace + 1;
    if (angr_global_var_ptrace == 1) {
        return 0x0;
    }
    if (angr_global_var_ptrace == 2) {
        return -1;
    }
    return -1; /* past the schedule: repeat the last value */
}
