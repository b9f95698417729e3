# Traffic data, scenario files and result writers
