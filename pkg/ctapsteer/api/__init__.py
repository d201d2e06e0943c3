# Init for ctapsteer.api package
