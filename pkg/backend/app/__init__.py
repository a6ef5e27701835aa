# ctrforge: click-through-rate prediction toolkit
