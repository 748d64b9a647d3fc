/* Generated stub patch.
 * path fingerprint: 85ca405a789c4a9c8a30d15874adfdccb26d5a29cf8e0676d6ebc7c5de4c5650
 * solver model:     4a6733708daa58d1e55b322ecbb4cfb394e96b2f2d514f70261df4ad9374d9bc
 */
#include <sys/types.h>
#include <time.h>

static int angr_global_var_clock = 0;

clock_t clock(void) {
    angr_global_var_clock = angr_global_var_clock + 1;
    if (angr_global_var_clock == 1) {
        return 0x0;
    }
    if (angr_global_var_clock == 2) {
        return 0xb;
    }
    return 0xb; /* past the schedule: repeat the last value */
}

unsigned int sleep(unsigned int seconds) {
    return 0x0;
}
